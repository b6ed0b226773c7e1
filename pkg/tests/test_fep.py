import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from probenv.fep import (
    ProbFepConfig,
    ScbConfig,
    binarize_threshold,
    modification_bound,
    prob_compensation,
    prob_protect,
    scb_protect,
)

finite = st.floats(-1e3, 1e3)


def test_thresholds():
    assert binarize_threshold(0.0) == 1.0
    assert binarize_threshold(1.0) == pytest.approx(0.606531, abs=1e-6)
    assert binarize_threshold(3.0) == pytest.approx(0.011109, abs=1e-6)
    with pytest.raises(ValueError):
        ScbConfig(k0=-1.0)


def test_scb_cases():
    assert scb_protect(1.0, 0.0, 2.0) == 1.0
    assert scb_protect(3.0, 0.0, 2.0) == 2.0
    assert scb_protect(-3.0, 0.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        scb_protect(0.0, 1.0, 0.0)


@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=6))
def test_scb_bounded_and_idempotent(rows):
    a = np.array(rows)
    lo, hi = np.minimum(a[:, 1], a[:, 2]), np.maximum(a[:, 1], a[:, 2])
    once = scb_protect(a[:, 0], lo, hi)
    assert np.all((lo <= once) & (once <= hi))
    assert np.array_equal(scb_protect(once, lo, hi), once)
    inside = (lo <= a[:, 0]) & (a[:, 0] <= hi)
    assert np.array_equal(once[inside], a[inside, 0])


def test_prob_examples():
    cfg = ProbFepConfig(M0=0.0)
    assert prob_protect(3.0, 0.5, 0.7, cfg, K_fep=0.8) == 3.0
    assert prob_compensation(-1.0, 0.5, 0.8) == pytest.approx(0.4)
    assert prob_protect(3.0, -1.0, 0.5, cfg, K_fep=0.8) == pytest.approx(3.4)
    assert prob_protect(3.0, -9.0, 0.0, cfg, K_fep=0.8) == 3.0


def test_prob_gains_by_name():
    cfg = ProbFepConfig()
    out = prob_protect(np.zeros(3), -2.0, np.ones(3), cfg, names=("alpha", "q", "h"))
    assert np.allclose(out, [1.6, 0.1, 0.0])
    with pytest.raises(ValueError):
        ProbFepConfig(K_fep={"alpha": -1.0})


def test_prob_continuous_at_threshold():
    J = np.array([0.3, -0.2])
    K = np.array([0.8, 0.8])
    for dm in (1e-3, 1e-6, 1e-9):
        assert np.linalg.norm(prob_compensation(-dm, J, K, 0.0)) <= dm
    assert np.all(prob_compensation(0.0, J, K, 0.0) == 0.0)


@given(M=st.floats(np.log(1e-6), 0.0), J=st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_prob_bounded(M, J):
    K = np.array([0.8, 0.05])
    grad = np.array([2.0, 2.0])
    chi = prob_compensation(M, J, K, 0.0)
    assert np.linalg.norm(chi) <= modification_bound(np.log(1e-6), 0.0, K, grad) + 1e-12
