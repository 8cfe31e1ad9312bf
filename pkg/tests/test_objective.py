import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffdsep.citests import CiTable, oracle_table
from diffdsep.objective import (
    TASKS,
    dag_in_domain,
    dag_loss,
    default_s,
    energy,
    loss_suite,
    statement_weights,
    weights_from_logits,
)

from conftest import chain_dag, random_dag


def random_table(rng, d):
    idx_sizes = d * (d - 1) // 2, d * (d - 1) * (d - 2) // 2
    return CiTable.from_values(d, rng.random(idx_sizes[0]), rng.random(idx_sizes[1]))


def central_diff(f, theta, h=1e-5):
    g = np.zeros((5,) + theta.shape)
    for i, j in np.ndindex(theta.shape):
        tp, tm = theta.copy(), theta.copy()
        tp[i, j] += h
        tm[i, j] -= h
        g[:, i, j] = (f(tp) - f(tm)) / (2 * h)
    return g


def test_default_scale():
    assert default_s(10) == 3.0 and default_s(20) == 3.0 and default_s(21) == 8.0


def test_dag_loss_two_cycle_value():
    w = np.array([[0.0, 0.5], [0.5, 0.0]])
    assert dag_loss(w, 3.0) == pytest.approx(-np.log(8.75) + 2 * np.log(3.0), rel=1e-12)


def test_dag_loss_zero_on_permuted_triangular(rng):
    for _ in range(10):
        d = 6
        perm = rng.permutation(d)
        w = np.triu(rng.random((d, d)), 1)[np.ix_(perm, perm)]
        assert abs(dag_loss(w, 3.0)) < 1e-12


def test_dag_loss_out_of_domain_is_infinite():
    w = np.ones((4, 4)) - np.eye(4)  # spectral radius 3
    assert not dag_in_domain(w, 3.0)
    assert dag_loss(w, 3.0) == np.inf


def test_weights_diagonal_is_zero(rng):
    w = weights_from_logits(rng.normal(size=(4, 4)) * 50)
    assert np.all(np.diag(w) == 0)
    off = w[~np.eye(4, dtype=bool)]
    assert np.all((off > 0) & (off < 1))


def test_gradients_match_finite_differences(rng):
    d = 5
    table = random_table(rng, d)
    for _ in range(3):
        theta = rng.normal(-1.0, 1.0, size=(d, d))
        lv = loss_suite(theta, table)
        assert not lv.dag_infinite
        ref = central_diff(lambda t: loss_suite(t, table).values, theta)
        for k in range(5):
            scale = max(1.0, np.abs(ref[k]).max())
            np.testing.assert_allclose(lv.grads[k], ref[k], atol=1e-4 * scale, err_msg=TASKS[k])
        np.testing.assert_array_equal(np.diagonal(lv.grads, axis1=1, axis2=2), 0.0)


def test_task_weights_scale_losses(rng):
    d = 4
    table = random_table(rng, d)
    theta = rng.normal(size=(d, d))
    plain = loss_suite(theta, table)
    w = (2.0, 0.5, 1.0, 3.0, 1.0)
    scaled = loss_suite(theta, table, weights=w)
    np.testing.assert_allclose(scaled.values, plain.values * np.array(w), rtol=1e-12)
    np.testing.assert_allclose(scaled.grads, plain.grads * np.array(w)[:, None, None], rtol=1e-12, atol=1e-15)


def test_statement_weights():
    tab = oracle_table(chain_dag(5))
    assert statement_weights(tab, 30.0) == (3.0, 1.0, 3.0, 1.0, 1.0)


def test_oracle_truth_beats_random_dags(rng):
    truth = chain_dag(5)
    table = oracle_table(truth)

    def tptn_loss(dag):
        # hard encoding: sigmoid(+-30) is binary to 1e-13
        theta = np.where(dag.adjacency == 1, 30.0, -30.0)
        return loss_suite(theta, table).values[:4].sum()

    best = tptn_loss(truth)
    others = [random_dag(rng, 5) for _ in range(30)]
    assert all(best < tptn_loss(g) for g in others if g != truth)


def test_energy_inputs():
    assert energy({k: 1.0 for k in TASKS}) == 5.0
    assert energy(np.array([1.0, 2.0, 3.0, 4.0, np.inf])) == np.inf


def test_input_validation(rng):
    table = random_table(rng, 4)
    with pytest.raises(ValueError):
        loss_suite(np.zeros((3, 3)), table)
    with pytest.raises(ValueError):
        loss_suite(np.full((4, 4), np.nan), table)
    with pytest.raises(ValueError):
        loss_suite(np.zeros((4, 4)), table, alpha=0.0)
    with pytest.raises(ValueError):
        loss_suite(np.zeros((4, 4)), table, weights=(1.0, 1.0))


@given(st.integers(3, 6), st.integers(0, 2**31 - 1))
def test_statement_losses_non_negative(d, seed):
    r = np.random.default_rng(seed)
    lv = loss_suite(r.normal(size=(d, d)), random_table(r, d), max_len=2)
    assert np.all(lv.values[:4] >= 0)
    assert lv.dag_infinite or lv.dag >= -1e-12
