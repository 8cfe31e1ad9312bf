"""Order-0 and order-1 conditional independence p-values.

Two tests are provided: Fisher-z on partial correlations (continuous data)
and a stratified Pearson chi-square (categorical data). :func:`build_ci_table`
runs one of them over every order-0 pair and order-1 triple and can cache the
result on disk, since this is by far the most expensive step of a run and is
reused across step-size sweeps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from scipy import stats

from .graph import QueryIndexSets, discrete_statements, BinaryDag

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
MAX_CATEGORICAL_LEVELS = 10

Kind = Union[str, int]  # "continuous" or the number of categorical levels


class ConfigurationError(ValueError):
    """A CI test was asked to run on columns it cannot handle."""


class DegenerateDataError(ValueError):
    """The data do not determine a test statistic (constant or collinear columns)."""


@dataclass
class Dataset:
    """``n x d`` table with one kind tag per column."""

    values: np.ndarray
    kinds: list = field(default_factory=list)
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("dataset values must be a 2-D array")
        d = self.values.shape[1]
        if not self.kinds:
            self.kinds = infer_kinds(self.values)
        if not self.names:
            self.names = [f"x{i}" for i in range(d)]
        if len(self.kinds) != d or len(self.names) != d:
            raise ValueError("kinds and names must have one entry per column")
        for j, kind in enumerate(self.kinds):
            if kind == CONTINUOUS:
                continue
            col = self.values[:, j]
            if np.any(col != np.round(col)) or col.min() < 0 or col.max() >= kind:
                raise ValueError(f"column {self.names[j]!r} is not categorical in [0, {kind})")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def is_categorical(self, j: int) -> bool:
        return self.kinds[j] != CONTINUOUS

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.values).tobytes())
        h.update(json.dumps([str(k) for k in self.kinds]).encode())
        return h.hexdigest()


def infer_kinds(values: np.ndarray) -> list:
    """Integer columns with at most 10 distinct non-negative values are categorical."""
    kinds = []
    for col in np.asarray(values, dtype=float).T:
        uniq = np.unique(col)
        if (
            np.all(uniq == np.round(uniq))
            and len(uniq) <= MAX_CATEGORICAL_LEVELS
            and uniq.min() >= 0
        ):
            kinds.append(int(uniq.max()) + 1)
        else:
            kinds.append(CONTINUOUS)
    return kinds


def read_dataset(path, kinds: Sequence | None = None) -> Dataset:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Dataset(values, list(kinds) if kinds else [], [h.strip() for h in header])


def write_dataset(path, data: Dataset) -> None:
    fmt = ["%d" if k != CONTINUOUS else "%.17g" for k in data.kinds]
    np.savetxt(path, data.values, fmt=fmt, delimiter=",", header=",".join(data.names), comments="")


# ------------------------------------------------------------- Fisher-z

RHO_LIMIT = 1.0 - 1e-12


def _fisher_from_corr(corr: np.ndarray, n: int) -> float:
    k = corr.shape[0] - 2
    if k == 0:
        r = corr[0, 1]
    else:
        if abs(np.linalg.det(corr)) < 1e-12:
            raise DegenerateDataError("singular correlation matrix")
        prec = np.linalg.inv(corr)
        r = -prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1])
    if not np.isfinite(r):
        raise DegenerateDataError("undefined partial correlation")
    if abs(r) >= RHO_LIMIT:
        return 0.0
    z = 0.5 * np.sqrt(n - k - 3) * np.log((1 + r) / (1 - r))
    return float(min(1.0, 2.0 * stats.norm.sf(abs(z))))


def _corr(values: np.ndarray) -> np.ndarray:
    sd = values.std(axis=0)
    if np.any(sd == 0):
        raise DegenerateDataError("constant column")
    with np.errstate(invalid="ignore"):
        return np.corrcoef(values, rowvar=False)


def fisher_z(data: Dataset, x: int, y: int, cond: Sequence[int] = ()) -> float:
    """Two-sided Fisher-z p-value for ``x`` independent of ``y`` given ``cond``."""
    cond = list(cond)
    if len(cond) > 1:
        raise ValueError("only conditioning sets of size <= 1 are supported")
    n = data.n_samples
    if n <= len(cond) + 3:
        raise ValueError(f"Fisher-z needs more than {len(cond) + 3} samples")
    cols = [x, y] + cond
    return _fisher_from_corr(_corr(data.values[:, cols]), n)


# ------------------------------------------------------------ chi-square


def _pearson_stratified(counts: np.ndarray) -> tuple[float, int]:
    """Summed Pearson statistic and pooled df over strata ``counts[s, i, j]``."""
    stat = 0.0
    df = 0
    for table in counts:
        table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
        r, c = table.shape
        if r < 2 or c < 2:
            continue
        total = table.sum()
        expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / total
        stat += float(((table - expected) ** 2 / expected).sum())
        df += (r - 1) * (c - 1)
    return stat, df


def chi_square_counts(counts: np.ndarray) -> float:
    """p-value of a 2-D table or a stack of per-stratum tables."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 2:
        counts = counts[None]
    stat, df = _pearson_stratified(counts)
    if df == 0:
        return 1.0
    return float(stats.chi2.sf(stat, df))


def chi_square(data: Dataset, x: int, y: int, cond: Sequence[int] = ()) -> float:
    """Pearson chi-square p-value, stratified over the levels of ``cond``."""
    cond = list(cond)
    if len(cond) > 1:
        raise ValueError("only conditioning sets of size <= 1 are supported")
    for j in [x, y] + cond:
        if not data.is_categorical(j):
            raise ConfigurationError(f"chi-square needs categorical data; column {data.names[j]!r} is continuous")
    v = data.values.astype(np.int64)
    kx, ky = data.kinds[x], data.kinds[y]
    if cond:
        kz = data.kinds[cond[0]]
        codes = (v[:, cond[0]] * kx + v[:, x]) * ky + v[:, y]
        counts = np.bincount(codes, minlength=kz * kx * ky).reshape(kz, kx, ky)
    else:
        codes = v[:, x] * ky + v[:, y]
        counts = np.bincount(codes, minlength=kx * ky).reshape(1, kx, ky)
    return chi_square_counts(counts)


# ---------------------------------------------------------------- tables


@dataclass
class CiTable:
    """p-values for all order-0 pairs and order-1 triples.

    ``p0[x, y]`` and ``p1[x, y, z]`` are symmetric in ``(x, y)``; slots with
    repeated nodes hold ``nan``.
    """

    p0: np.ndarray
    p1: np.ndarray
    test: str = "custom"
    source: str = "computed"

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float)
        self.p1 = np.asarray(self.p1, dtype=float)
        d = self.p0.shape[0]
        if self.p0.shape != (d, d) or self.p1.shape != (d, d, d):
            raise ValueError("p-value arrays have inconsistent shapes")
        self.index = QueryIndexSets.for_nodes(d)
        v0, v1 = self.order0_values(), self.order1_values()
        if np.any(np.isnan(v0)) or np.any(np.isnan(v1)):
            raise ValueError("p-value table is incomplete")
        if np.any((v0 < 0) | (v0 > 1)) or np.any((v1 < 0) | (v1 > 1)):
            raise ValueError("p-values must lie in [0, 1]")

    @property
    def n_nodes(self) -> int:
        return self.p0.shape[0]

    def order0_values(self) -> np.ndarray:
        o = self.index.order0
        return self.p0[o[:, 0], o[:, 1]]

    def order1_values(self) -> np.ndarray:
        o = self.index.order1
        return self.p1[o[:, 0], o[:, 1], o[:, 2]]

    @property
    def m0(self) -> float:
        v = self.order0_values()
        return float(v.max()) if v.size else 0.0

    @property
    def m1(self) -> float:
        v = self.order1_values()
        return float(v.max()) if v.size else 0.0

    @classmethod
    def from_values(cls, d: int, v0, v1, **kw) -> "CiTable":
        """Build from vectors aligned with :class:`QueryIndexSets`."""
        idx = QueryIndexSets.for_nodes(d)
        p0 = np.full((d, d), np.nan)
        p1 = np.full((d, d, d), np.nan)
        o0, o1 = idx.order0, idx.order1
        p0[o0[:, 0], o0[:, 1]] = v0
        p0[o0[:, 1], o0[:, 0]] = v0
        p1[o1[:, 0], o1[:, 1], o1[:, 2]] = v1
        p1[o1[:, 1], o1[:, 0], o1[:, 2]] = v1
        return cls(p0, p1, **kw)


def oracle_table(dag: BinaryDag | np.ndarray) -> CiTable:
    """Noiseless p-values: 1 on every d-separation of ``dag``, 0 elsewhere."""
    con0, con1 = discrete_statements(dag)
    d = con0.shape[0]
    idx = QueryIndexSets.for_nodes(d)
    o0, o1 = idx.order0, idx.order1
    v0 = (~con0[o0[:, 0], o0[:, 1]]).astype(float)
    v1 = (~con1[o1[:, 0], o1[:, 1], o1[:, 2]]).astype(float)
    return CiTable.from_values(d, v0, v1, test="oracle")


CiTest = Callable[[Dataset, int, int, Sequence[int]], float]

_TESTS: dict[str, CiTest] = {"fisherz": fisher_z, "chisq": chi_square}


def resolve_test(data: Dataset, test: str | CiTest) -> tuple[str, CiTest]:
    if callable(test):
        return getattr(test, "__name__", "custom"), test
    if test == "auto":
        test = "chisq" if all(data.is_categorical(j) for j in range(data.n_vars)) else "fisherz"
    if test not in _TESTS:
        raise ConfigurationError(f"unknown CI test {test!r}; choose from {sorted(_TESTS)} or 'auto'")
    if test == "chisq":
        for j in range(data.n_vars):
            if not data.is_categorical(j):
                raise ConfigurationError(
                    f"chi-square needs categorical data; column {data.names[j]!r} is continuous"
                )
    return test, _TESTS[test]


def _compute(data: Dataset, name: str, fn: CiTest) -> tuple[np.ndarray, np.ndarray]:
    idx = QueryIndexSets.for_nodes(data.n_vars)
    if name == "fisherz":
        corr = _corr(data.values)
        n = data.n_samples
        v0 = [_fisher_from_corr(corr[np.ix_([x, y], [x, y])], n) for x, y in idx.order0]
        v1 = [
            _fisher_from_corr(corr[np.ix_([x, y, z], [x, y, z])], n) for x, y, z in idx.order1
        ]
    else:
        v0 = [fn(data, int(x), int(y), ()) for x, y in idx.order0]
        v1 = [fn(data, int(x), int(y), (int(z),)) for x, y, z in idx.order1]
    return np.asarray(v0, dtype=float), np.asarray(v1, dtype=float)


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def cache_paths(cache_dir, key: str) -> tuple[Path, Path, Path]:
    root = Path(cache_dir)
    return root / f"{key}_order0.csv", root / f"{key}_order1.csv", root / f"{key}.json"


def _save(cache_dir, key, meta, idx: QueryIndexSets, v0, v1) -> None:
    p0, p1, pj = cache_paths(cache_dir, key)
    p0.parent.mkdir(parents=True, exist_ok=True)
    lines0 = ["x,y,pvalue"] + [f"{x},{y},{p:.17g}" for (x, y), p in zip(idx.order0, v0)]
    lines1 = ["x,y,z,pvalue"] + [f"{x},{y},{z},{p:.17g}" for (x, y, z), p in zip(idx.order1, v1)]
    _atomic_write(p0, "\n".join(lines0) + "\n")
    _atomic_write(p1, "\n".join(lines1) + "\n")
    _atomic_write(pj, json.dumps(meta, indent=2) + "\n")


def _load(cache_dir, key, d: int):
    p0, p1, pj = cache_paths(cache_dir, key)
    if not (p0.exists() and p1.exists() and pj.exists()):
        return None
    a0 = np.loadtxt(p0, delimiter=",", skiprows=1, ndmin=2)
    a1 = np.loadtxt(p1, delimiter=",", skiprows=1, ndmin=2)
    idx = QueryIndexSets.for_nodes(d)
    if a0.shape[0] != len(idx.order0) or a1.shape[0] != len(idx.order1):
        return None
    if not (np.array_equal(a0[:, :2], idx.order0) and np.array_equal(a1[:, :3], idx.order1)):
        return None
    return a0[:, 2], a1[:, 3]


def build_ci_table(data: Dataset, test: str | CiTest = "auto", cache_dir=None) -> CiTable:
    """p-values for every query in the order-0 and order-1 index sets.

    With ``cache_dir`` set, results are keyed by the dataset fingerprint and
    test name; a warm cache is returned without recomputation.
    """
    name, fn = resolve_test(data, test)
    d = data.n_vars
    key = hashlib.sha256(f"{data.fingerprint()}:{name}".encode()).hexdigest()[:24]
    if cache_dir is not None:
        hit = _load(cache_dir, key, d)
        if hit is not None:
            logger.info("CI table cache hit (%s)", key)
            return CiTable.from_values(d, hit[0], hit[1], test=name, source="cache")
    v0, v1 = _compute(data, name, fn)
    if cache_dir is not None:
        meta = {
            "dataset_hash": data.fingerprint(),
            "test": name,
            "n": data.n_samples,
            "d": d,
        }
        _save(cache_dir, key, meta, QueryIndexSets.for_nodes(d), v0, v1)
    return CiTable.from_values(d, v0, v1, test=name)
