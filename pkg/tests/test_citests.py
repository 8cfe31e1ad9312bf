import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from diffdsep.citests import (
    CONTINUOUS,
    CiTable,
    ConfigurationError,
    Dataset,
    DegenerateDataError,
    build_ci_table,
    chi_square,
    chi_square_counts,
    fisher_z,
    infer_kinds,
    oracle_table,
    read_dataset,
    resolve_test,
    write_dataset,
)
from diffdsep.graph import QueryIndexSets

from conftest import chain_dag


def gaussian_chain(rng, n):
    x = rng.normal(size=n)
    z = x + rng.normal(size=n)
    y = z + rng.normal(size=n)
    return Dataset(np.column_stack([x, y, z]), [CONTINUOUS] * 3)


def residual_fisher(values, x, y, cond):
    """Partial correlation from least-squares residuals."""
    a, b = values[:, x], values[:, y]
    if cond:
        design = np.column_stack([np.ones(len(a)), values[:, cond]])
        a = a - design @ np.linalg.lstsq(design, a, rcond=None)[0]
        b = b - design @ np.linalg.lstsq(design, b, rcond=None)[0]
    r = stats.pearsonr(a, b)[0]
    z = np.arctanh(r) * np.sqrt(len(a) - len(cond) - 3)
    return 2 * stats.norm.sf(abs(z))


def test_chi_square_known_table():
    # Pearson statistic of [[30,10],[10,30]] is 20 with 1 degree of freedom
    assert chi_square_counts([[30, 10], [10, 30]]) == pytest.approx(stats.chi2.sf(20.0, 1), rel=1e-12)


def test_chi_square_matches_scipy_contingency(rng):
    v = rng.integers(0, 3, size=(400, 2))
    data = Dataset(v, [3, 3])
    counts = np.zeros((3, 3))
    np.add.at(counts, (v[:, 0], v[:, 1]), 1)
    ref = stats.chi2_contingency(counts, correction=False).pvalue
    assert chi_square(data, 0, 1) == pytest.approx(ref, rel=1e-10)


def test_stratified_chi_square_sums_strata(rng):
    v = rng.integers(0, 2, size=(600, 3))
    data = Dataset(v, [2, 2, 2])
    stat = 0.0
    for level in (0, 1):
        rows = v[v[:, 2] == level]
        counts = np.zeros((2, 2))
        np.add.at(counts, (rows[:, 0], rows[:, 1]), 1)
        stat += stats.chi2_contingency(counts, correction=False).statistic
    assert chi_square(data, 0, 1, [2]) == pytest.approx(stats.chi2.sf(stat, 2), rel=1e-10)


def test_chi_square_constant_column_is_uninformative():
    v = np.column_stack([np.zeros(50), np.arange(50) % 2])
    assert chi_square(Dataset(v, [2, 2]), 0, 1) == 1.0


def test_chi_square_rejects_continuous(rng):
    data = Dataset(np.column_stack([rng.normal(size=20), np.zeros(20)]), [CONTINUOUS, 2])
    with pytest.raises(ConfigurationError):
        chi_square(data, 0, 1)
    with pytest.raises(ConfigurationError):
        resolve_test(data, "chisq")


def test_fisher_z_matches_residual_regression(rng):
    data = gaussian_chain(rng, 300)
    assert fisher_z(data, 0, 1) == pytest.approx(residual_fisher(data.values, 0, 1, []), rel=1e-8)
    assert fisher_z(data, 0, 1, [2]) == pytest.approx(residual_fisher(data.values, 0, 1, [2]), rel=1e-8)


def test_fisher_z_chain_behaviour(rng):
    data = gaussian_chain(rng, 5000)
    assert fisher_z(data, 0, 1) < 1e-6
    assert fisher_z(data, 0, 1, [2]) > 1e-3


def test_fisher_z_degenerate_inputs(rng):
    x = rng.normal(size=50)
    with pytest.raises(DegenerateDataError):
        fisher_z(Dataset(np.column_stack([x, np.ones(50)]), [CONTINUOUS] * 2), 0, 1)
    perfect = Dataset(np.column_stack([x, 2 * x]), [CONTINUOUS] * 2)
    assert fisher_z(perfect, 0, 1) == 0.0


def test_infer_kinds():
    v = np.column_stack([[0, 1, 2, 1], [0.5, 1.0, 2.0, 3.0], [0, 0, 0, 0]])
    assert infer_kinds(v) == [3, CONTINUOUS, 1]


def test_dataset_rejects_out_of_range_levels():
    with pytest.raises(ValueError):
        Dataset(np.array([[0.0], [2.0]]), [2])


def test_dataset_roundtrip(tmp_path, rng):
    data = Dataset(np.column_stack([rng.integers(0, 2, 10), rng.normal(size=10)]), [2, CONTINUOUS], ["a", "b"])
    write_dataset(tmp_path / "d.csv", data)
    back = read_dataset(tmp_path / "d.csv")
    assert back.names == ["a", "b"]
    assert back.kinds == [2, CONTINUOUS]
    np.testing.assert_array_equal(back.values, data.values)


def test_auto_selects_test(rng):
    cat = Dataset(rng.integers(0, 2, size=(10, 3)), [2, 2, 2])
    assert resolve_test(cat, "auto")[0] == "chisq"
    assert resolve_test(gaussian_chain(rng, 10), "auto")[0] == "fisherz"
    with pytest.raises(ConfigurationError):
        resolve_test(cat, "kendall")


def test_oracle_table_marks_separations():
    tab = oracle_table(chain_dag(3))
    assert tab.p0[0, 2] == 0.0
    assert tab.p1[0, 2, 1] == 1.0
    assert tab.p1[2, 0, 1] == 1.0


def test_table_validation():
    with pytest.raises(ValueError):
        CiTable.from_values(3, [0.5, 0.5, 1.5], np.zeros(3))
    with pytest.raises(ValueError):
        CiTable(np.full((3, 3), np.nan), np.zeros((3, 3, 3)))
    with pytest.raises(ValueError):
        CiTable(np.zeros((3, 3)), np.zeros((3, 3, 2)))


def test_table_matches_direct_calls(rng):
    data = Dataset(rng.integers(0, 2, size=(300, 4)), [2] * 4)
    tab = build_ci_table(data, "chisq")
    idx = QueryIndexSets.for_nodes(4)
    for (x, y), p in zip(idx.order0, tab.order0_values()):
        assert p == pytest.approx(chi_square(data, x, y))
    for (x, y, z), p in zip(idx.order1, tab.order1_values()):
        assert p == pytest.approx(chi_square(data, x, y, [z]))


def test_fast_fisher_path_matches_direct_calls(rng):
    data = Dataset(rng.normal(size=(200, 4)), [CONTINUOUS] * 4)
    tab = build_ci_table(data, "fisherz")
    idx = QueryIndexSets.for_nodes(4)
    for (x, y, z), p in zip(idx.order1, tab.order1_values()):
        assert p == pytest.approx(fisher_z(data, x, y, [z]), rel=1e-9)


def test_cache_hit_returns_same_table(tmp_path, rng):
    data = Dataset(rng.integers(0, 2, size=(200, 4)), [2] * 4)
    first = build_ci_table(data, cache_dir=tmp_path)
    second = build_ci_table(data, cache_dir=tmp_path)
    assert first.source == "computed" and second.source == "cache"
    np.testing.assert_array_equal(first.order1_values(), second.order1_values())
    other = Dataset(rng.integers(0, 2, size=(200, 4)), [2] * 4)
    assert build_ci_table(other, cache_dir=tmp_path).source == "computed"


@given(st.integers(0, 2**31 - 1))
def test_p_values_in_unit_interval(seed):
    r = np.random.default_rng(seed)
    data = Dataset(r.integers(0, 3, size=(60, 3)), [3, 3, 3])
    tab = build_ci_table(data)
    assert np.all((tab.order0_values() >= 0) & (tab.order0_values() <= 1))
    assert np.all((tab.order1_values() >= 0) & (tab.order1_values() <= 1))
