import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlbs.states import (
    DensityOperator,
    StateError,
    TruncationError,
    cc_density,
    default_cutoff,
    dephase_numerically,
    fdtsv_density,
    geometric_pmf,
    load_density,
    partial_trace,
    product_density,
    pure_density,
    save_density,
    shannon_entropy,
    thermal_density,
    thermal_entropy,
    thermal_mean,
    tmsv_density,
    tmsv_state,
    von_neumann_entropy,
)

eps_strategy = st.floats(0.05, 0.7)


def test_geometric_pmf_values():
    assert geometric_pmf(0.5, 0) == 0.75
    assert geometric_pmf(0.5, 1) == 0.1875
    with pytest.raises(ValueError):
        geometric_pmf(0.5, -1)
    with pytest.raises(ValueError):
        geometric_pmf(1.0, 0)


@settings(max_examples=40, deadline=None)
@given(eps=eps_strategy, d=st.integers(2, 60))
def test_truncated_pmf_mass(eps, d):
    p = geometric_pmf(eps, np.arange(d))
    assert abs(p.sum() - (1 - eps ** (2 * d))) < 1e-12


@pytest.mark.parametrize("eps", [0.1, 0.5, 0.8])
def test_pmf_mean_is_thermal(eps):
    j = np.arange(2000)
    mean = float(np.sum(j * geometric_pmf(eps, j)))
    assert mean == pytest.approx(eps**2 / (1 - eps**2), rel=1e-12)
    assert thermal_mean(eps) == pytest.approx(mean, rel=1e-12)


def test_default_cutoff():
    assert default_cutoff(0.5) == 20  # 0.25**20 < 1e-12 <= 0.25**19
    for eps in (0.1, 0.3, 0.7, 0.9):
        d = default_cutoff(eps)
        assert eps ** (2 * d) < 1e-12 <= eps ** (2 * (d - 1)) or d == 2


def test_tmsv_vacuum_limit():
    psi = tmsv_state(1e-9, 5)
    assert abs(psi[0] - 1) < 1e-15
    assert np.linalg.norm(psi[1:]) < 1e-8


@settings(max_examples=30, deadline=None)
@given(eps=eps_strategy, d=st.integers(2, 30))
def test_tmsv_normalised(eps, d):
    assert abs(np.linalg.norm(tmsv_state(eps, d)) - 1) < 1e-12


def test_tmsv_geometric_ratio():
    d = 12
    psi = tmsv_state(0.5, d)
    amps = psi[np.arange(d) * (d + 1)].real
    np.testing.assert_allclose(amps[1:] / amps[:-1], 0.5, rtol=1e-14)
    mask = np.ones(d * d, bool)
    mask[np.arange(d) * (d + 1)] = False
    assert np.all(psi[mask] == 0)


def test_tmsv_tail_error_without_renormalisation():
    with pytest.raises(TruncationError):
        tmsv_state(0.5, 5, renormalize=False)
    psi = tmsv_state(0.5, 40, renormalize=False)
    assert abs(np.linalg.norm(psi) - 1) < 1e-12


def test_fdtsv_is_diagonal_and_correlated():
    d = 15
    rho = fdtsv_density(0.5, d)
    M = rho.matrix
    assert np.all(M[~np.eye(d * d, dtype=bool)] == 0)
    t = rho.tensor()
    for j in range(d):
        for k in range(d):
            if j != k:
                assert t[j, k, j, k] == 0
    rho.validate()


@pytest.mark.parametrize("eps,d", [(0.3, 10), (0.5, 25)])
def test_fdtsv_is_dephased_tmsv(eps, d):
    proj = tmsv_density(eps, d).matrix
    dephased = np.diag(np.diag(proj))
    # |amp|^2 from the pure state can differ from p_j in the last bit
    np.testing.assert_allclose(fdtsv_density(eps, d).matrix, dephased, rtol=0, atol=1e-16)
    # phase-average quadrature agrees with the closed form
    num = dephase_numerically(tmsv_density(eps, d), n_phases=64)
    np.testing.assert_allclose(num.matrix, fdtsv_density(eps, d).matrix, atol=1e-15)


def test_fdtsv_marginal_is_thermal():
    rho = fdtsv_density(0.5, 40)
    for side in "AB":
        m = partial_trace(rho, side).matrix
        assert np.all(m[~np.eye(40, dtype=bool)] == 0)
        n = np.arange(40)
        assert float(np.diag(m).real @ n) == pytest.approx(1 / 3, abs=1e-12)


def test_partial_trace_of_product_returns_factor(rng):
    def rand_state(d):
        G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        M = G @ G.conj().T
        return DensityOperator((d,), M / np.trace(M).real)

    ra, rb = rand_state(3), rand_state(4)
    prod = product_density(ra, rb)
    np.testing.assert_allclose(partial_trace(prod, "B").matrix, ra.matrix, atol=1e-15)
    np.testing.assert_allclose(partial_trace(prod, "A").matrix, rb.matrix, atol=1e-15)


def test_partial_trace_of_tmsv_is_geometric():
    d = 30
    rb = partial_trace(tmsv_density(0.5, d), "A").matrix
    p = geometric_pmf(0.5, np.arange(d))
    np.testing.assert_allclose(np.diag(rb).real, p / p.sum(), atol=1e-15)
    assert np.max(np.abs(rb - np.diag(np.diag(rb)))) == 0


def test_partial_trace_of_uniform_cc_is_maximally_mixed():
    d = 5
    rho = cc_density(np.eye(d) / d)
    np.testing.assert_allclose(partial_trace(rho, "A").matrix, np.eye(d) / d, atol=0)
    assert von_neumann_entropy(partial_trace(rho, "B")) == pytest.approx(math.log2(d), abs=1e-12)


def test_partial_trace_preserves_trace(rng):
    G = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    M = G @ G.conj().T
    rho = DensityOperator((3, 4), M / np.trace(M).real)
    for side in "AB":
        assert abs(np.trace(partial_trace(rho, side).matrix) - 1) < 1e-12
    with pytest.raises(StateError):
        partial_trace(DensityOperator((3,), np.eye(3) / 3), "A")


def test_entropy_examples(rng):
    v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    v /= np.linalg.norm(v)
    assert abs(von_neumann_entropy(pure_density(v, (2, 3)))) < 1e-10
    assert von_neumann_entropy(np.eye(2) / 2) == pytest.approx(1.0, abs=1e-15)
    nbar = 1 / 3
    th = thermal_density(0.5, 40)
    assert abs(von_neumann_entropy(th) - thermal_entropy(nbar)) < 1e-8


def test_entropy_rejects_bad_operators():
    with pytest.raises(StateError):
        von_neumann_entropy(np.array([[0.5, 0.1], [0.3, 0.5]]))
    with pytest.raises(StateError):
        von_neumann_entropy(np.diag([1.5, -0.5]))


@pytest.mark.parametrize("eps", [0.3, 0.5])
def test_dephasing_keeps_marginal_entropy(eps):
    d = 30
    s_t = von_neumann_entropy(partial_trace(tmsv_density(eps, d), "B"))
    s_f = von_neumann_entropy(partial_trace(fdtsv_density(eps, d), "B"))
    assert abs(s_t - s_f) < 1e-10


def test_fdtsv_entropy_signature():
    d = 40
    rho = fdtsv_density(0.5, d)
    p = geometric_pmf(0.5, np.arange(d))
    h = shannon_entropy(p / p.sum())
    assert abs(von_neumann_entropy(rho) - h) < 1e-10
    assert abs(von_neumann_entropy(partial_trace(rho, "A")) - h) < 1e-10
    assert abs(von_neumann_entropy(partial_trace(rho, "B")) - h) < 1e-10


def test_density_json_roundtrip(tmp_path):
    rho = tmsv_density(0.4, 6)
    path = tmp_path / "rho.json"
    save_density(path, rho)
    back = load_density(path)
    assert back.dims == (6, 6)
    np.testing.assert_array_equal(back.matrix, rho.matrix)


def test_density_json_rejects_invalid(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"dims": [2, 1], "re": [[0.6, 0], [0, 0.6]], "im": [[0, 0], [0, 0]]}')
    with pytest.raises(StateError):
        load_density(path)
    path.write_text('{"dims": [2, 2], "re": [[1]]}')
    with pytest.raises(StateError):
        load_density(path)
