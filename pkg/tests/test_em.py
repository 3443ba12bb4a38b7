import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar
from scipy.stats import multivariate_normal

from rgpcm.constraints import ConstraintSpec
from rgpcm.em import (
    EmConfig,
    MixtureModel,
    clamp_eigs,
    component_log_densities,
    detect_degeneracy,
    e_step,
    fit,
    flury_objective,
    log_density_gauss,
    m_step_covariance,
    m_step_weights_means,
    map_labels,
    update_B_common,
    update_B_varying,
    update_D_common,
    update_D_varying,
)
from rgpcm.family import CovarianceFactors, Structure, assemble_sigma
from rgpcm.initialize import one_hot
from rgpcm.linalg import eig_sym, reconstruct

from conftest import random_spd, rotation

LOG2PI = math.log(2 * math.pi)


def two_blobs(seed=0, n=60, p=2, gap=8.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2 * n, p))
    x[n:, 0] += gap
    return x, np.repeat([0, 1], n)


# ---------------------------------------------------------------- densities

def test_log_density_examples():
    assert log_density_gauss([0, 0], [0, 0], np.eye(2)) == pytest.approx(-LOG2PI)
    assert log_density_gauss([1, 0], [0, 0], np.eye(2)) == pytest.approx(-LOG2PI - 0.5)
    assert log_density_gauss([2.0], [0.0], [[4.0]]) == pytest.approx(-0.5 * math.log(2 * math.pi * 4) - 0.5)


@given(st.integers(1, 4), st.integers(0, 999))
def test_factor_density_matches_cholesky(p, seed):
    rng = np.random.default_rng(seed)
    d = np.linalg.qr(rng.normal(size=(p, p)))[0]
    ev = rng.uniform(0.2, 4, size=p)
    f = CovarianceFactors(Structure.VV, 1, p, ev, d)
    model = MixtureModel(np.array([1.0]), rng.normal(size=(1, p)), f)
    x = rng.normal(size=(7, p))
    want = log_density_gauss(x, model.means[0], assemble_sigma(f, 0))
    np.testing.assert_allclose(component_log_densities(x, model)[:, 0], want, rtol=1e-10)
    np.testing.assert_allclose(want, multivariate_normal(model.means[0], assemble_sigma(f, 0)).logpdf(x))


def _model(structure, G, p, means, eigvals, orients=None, weights=None):
    w = np.full(G, 1.0 / G) if weights is None else np.asarray(weights)
    return MixtureModel(w, np.asarray(means, float), CovarianceFactors(structure, G, p, eigvals, orients))


def test_e_step_single_component():
    x = np.random.default_rng(0).normal(size=(10, 2))
    z, ll = e_step(x, _model("EI", 1, 2, [[0, 0]], [1, 1]))
    np.testing.assert_array_equal(z, 1.0)
    assert ll == pytest.approx(multivariate_normal(np.zeros(2)).logpdf(x).sum())


def test_e_step_symmetry():
    x = np.random.default_rng(1).normal(size=(10, 2))
    z, _ = e_step(x, _model("EI", 2, 2, [[1, 1], [1, 1]], [2, 3]))
    np.testing.assert_allclose(z, 0.5)
    z, _ = e_step(np.array([[0.0, 0.0]]), _model("1I", 2, 2, [[-1, 0], [1, 0]], [1.0]))
    np.testing.assert_allclose(z, [[0.5, 0.5]])
    assert map_labels(z)[0] == 0


def test_e_step_far_points_are_finite():
    z, ll = e_step(np.array([[1e3, 0.0]]), _model("1I", 2, 2, [[0, 0], [1, 0]], [1e-3]))
    assert np.isfinite(ll) and np.allclose(z, [[0, 1]])


# ---------------------------------------------------------------- M-step

def test_weights_means_hand_example():
    x = np.array([[0.0], [1.0], [2.0]])
    m = m_step_weights_means(x, [[1, 0], [1, 0], [0, 1]])
    np.testing.assert_allclose(m.weights, [2 / 3, 1 / 3])
    np.testing.assert_allclose(m.means, [[0.5], [2.0]])
    np.testing.assert_allclose(m.scatters[0], [[0.25]])
    np.testing.assert_allclose(m.scatters[1], [[0.0]])


def test_weights_means_hard_and_uniform():
    x, y = two_blobs(3)
    m = m_step_weights_means(x, one_hot(y, 2))
    np.testing.assert_allclose(m.means, [x[y == 0].mean(0), x[y == 1].mean(0)])
    m = m_step_weights_means(x, np.full((len(x), 3), 1 / 3))
    total = np.cov(x, rowvar=False, ddof=0)
    for g in range(3):
        np.testing.assert_allclose(m.means[g], x.mean(0))
        np.testing.assert_allclose(m.scatters[g], total, atol=1e-12)


def test_clamp_examples():
    np.testing.assert_allclose(clamp_eigs([0.5, 2, 5], 1, 3), [1, 2, 3])
    v = np.array([1e-5, 7.0, 1e9])
    np.testing.assert_array_equal(clamp_eigs(v, 0, np.inf), v)
    np.testing.assert_allclose(clamp_eigs([0.9, 1.1], 1, 1), [1, 1])
    with pytest.raises(ValueError):
        clamp_eigs([1.0], 2, 1)


def test_update_B_varying_examples():
    np.testing.assert_allclose(update_B_varying([np.diag([2.0, 5.0])], [np.eye(2)], 1, 3), [[2, 3]])
    s = random_spd(np.random.default_rng(0), 3)
    vals, vecs = eig_sym(s)
    np.testing.assert_allclose(update_B_varying([s], [vecs], 0, np.inf)[0], vals, atol=1e-10)
    out = update_B_varying([np.diag([4.0, 0.0])], [rotation(np.pi / 4)], 0.1, 10)
    np.testing.assert_allclose(out, [[2, 2]])


def test_update_B_common_examples():
    s = np.stack([np.diag([1.0, 3.0]), np.diag([3.0, 1.0])])
    eye = np.stack([np.eye(2)] * 2)
    np.testing.assert_allclose(update_B_common(s, eye, [0.5, 0.5], 0, np.inf), [2, 2])
    np.testing.assert_allclose(update_B_common(s, eye, [0.5, 0.5], 0, 1.5), [1.5, 1.5])
    one = random_spd(np.random.default_rng(1), 2)[None]
    np.testing.assert_allclose(
        update_B_common(one, eye[:1], [1.0], 0.5, 2), update_B_varying(one, eye[:1], 0.5, 2)[0]
    )


def test_update_D_varying_examples():
    np.testing.assert_allclose(np.abs(update_D_varying(np.diag([5.0, 3.0, 1.0]))), np.eye(3), atol=1e-12)
    d = update_D_varying([[2.0, 1.0], [1.0, 2.0]])
    r = 1 / math.sqrt(2)
    np.testing.assert_allclose(np.abs(d), [[r, r], [r, r]], atol=1e-12)
    assert d[:, 0] @ [1, 1] * d[:, 1] @ [1, -1] != 0
    s = np.diag([2.0, 2.0, 1.0])
    d = update_D_varying(s)
    np.testing.assert_allclose(reconstruct(d, np.diag(d.T @ s @ d)), s, atol=1e-12)


def test_update_D_varying_rank_matching():
    # eigenvalue 5 must meet the largest current eigenvalue, here in slot 2
    d = update_D_varying(np.diag([5.0, 1.0]), eigvals=np.array([0.3, 4.0]))
    np.testing.assert_allclose(np.abs(d), [[0, 1], [1, 0]], atol=1e-12)


# ---------------------------------------------------------------- common orientation

def _angle_grid_min(scatters, counts, eigvals, step):
    best = np.inf
    for th in np.arange(0.0, np.pi, step):
        best = min(best, flury_objective(rotation(th), scatters, counts, eigvals))
    return best


def test_common_orientation_codiagonal():
    s = np.stack([np.diag([4.0, 2.0, 1.0]), np.diag([3.0, 1.5, 0.2])])
    ev = np.array([[4.0, 2.0, 1.0], [3.0, 1.5, 0.2]])
    res = update_D_common(s, [10, 20], ev)
    np.testing.assert_allclose(np.abs(res.orient), np.eye(3), atol=1e-8)
    assert res.converged
    assert res.objective == pytest.approx(flury_objective(np.eye(3), s, [10, 20], ev), rel=1e-12)


def test_common_orientation_equal_scatters():
    s1 = random_spd(np.random.default_rng(4), 3)
    vals, vecs = eig_sym(s1)
    res = update_D_common(np.stack([s1, s1]), [5, 5], np.stack([vals, vals]))
    np.testing.assert_allclose(np.abs(res.orient.T @ vecs), np.eye(3), atol=1e-6)


def test_common_orientation_ten_degrees():
    s1 = np.diag([4.0, 1.0])
    r = rotation(np.radians(10))
    s2 = r @ s1 @ r.T
    ev = np.array([[4.0, 1.0], [4.0, 1.0]])
    res = update_D_common(np.stack([s1, s2]), [50, 50], ev)
    d = res.orient
    angle = math.atan2(d[1, 0], d[0, 0]) % np.pi
    assert 0 <= angle <= np.radians(10) + 1e-3
    assert res.objective <= _angle_grid_min(np.stack([s1, s2]), [50, 50], ev, 1e-3) + 1e-9
    assert np.all(np.diff(res.objective_trace) <= 1e-12)


# ---------------------------------------------------------------- covariance M-step

def test_vv_recovers_scatters():
    x, y = two_blobs(5, p=3)
    m = m_step_weights_means(x, one_hot(y, 2))
    f = m_step_covariance("VV", m, None, 0, np.inf)
    for g in range(2):
        np.testing.assert_allclose(assemble_sigma(f, g), m.scatters[g], atol=1e-10)


def test_1i_matches_direct_maximisation():
    x, y = two_blobs(6, n=15)
    z = one_hot(y, 2)
    m = m_step_weights_means(x, z)
    f = m_step_covariance("1I", m, None, 0, np.inf)

    def nll(log_s2):
        s2 = math.exp(log_s2)
        return -sum(
            multivariate_normal(m.means[g], s2 * np.eye(2)).logpdf(x[y == g]).sum() for g in range(2)
        )

    best = minimize_scalar(nll, bounds=(-5, 5), method="bounded", options={"xatol": 1e-10})
    assert f.eigvals[0, 0] == pytest.approx(math.exp(best.x), rel=1e-6)
    pooled = np.tensordot(m.weights, m.scatters, axes=1)
    assert f.eigvals[0, 0] == pytest.approx(np.trace(pooled) / 2, rel=1e-12)


def test_ee_pooled_eigendecomposition():
    x, y = two_blobs(7, p=3)
    m = m_step_weights_means(x, one_hot(y, 2))
    f = m_step_covariance("EE", m, None, 0, np.inf)
    pooled = np.tensordot(m.weights, m.scatters, axes=1)
    np.testing.assert_allclose(assemble_sigma(f, 0), pooled, atol=1e-10)
    np.testing.assert_allclose(f.eigvals[0], eig_sym(pooled).values, atol=1e-10)


@pytest.mark.parametrize("structure", list(Structure))
def test_m_step_respects_bounds(structure):
    x, y = two_blobs(8, p=3)
    m = m_step_weights_means(x, one_hot(y, 2))
    f = m_step_covariance(structure, m, None, 0.9, 1.1)
    for g in range(2):
        vals = eig_sym(assemble_sigma(f, g)).values
        assert vals.min() >= 0.9 - 1e-9 and vals.max() <= 1.1 + 1e-9


# ---------------------------------------------------------------- degeneracy and fit

def test_degeneracy_empty_component():
    cfg = EmConfig()
    assert detect_degeneracy([50.0, 0.0], 2, cfg)
    assert not detect_degeneracy([50.0, 50.0], 2, cfg)


def _collapse_data():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(size=(50, 1)), np.full((5, 1), 10.0)])
    return x, one_hot(np.repeat([0, 1], [50, 5]), 2)


def test_collapsing_component_is_degenerate():
    x, z0 = _collapse_data()
    rep = fit(x, "VV", 2, z0)
    assert rep.degenerate and "eigenvalue" in rep.reason
    assert not rep.usable


def test_collapse_repaired_by_lower_bound():
    x, z0 = _collapse_data()
    rep = fit(x, "VV", 2, z0, EmConfig(constraint=ConstraintSpec(a=0.5, b=10)))
    assert not rep.degenerate and rep.converged


def test_healthy_fit_is_not_degenerate():
    x, y = two_blobs(9)
    rep = fit(x, "VV", 2, one_hot(y, 2))
    assert rep.usable and rep.iterations >= 2


def test_single_component_closed_form():
    x = np.random.default_rng(10).normal(size=(80, 3)) @ np.array([[2, 0, 0], [1, 1, 0], [0, 0.5, 1]])
    rep = fit(x, "VV", 1, np.ones((80, 1)))
    s = np.cov(x, rowvar=False, ddof=0)
    np.testing.assert_allclose(rep.model.means[0], x.mean(0), atol=1e-12)
    np.testing.assert_allclose(rep.model.sigmas()[0], s, atol=1e-10)
    closed = -0.5 * 80 * (3 * LOG2PI + np.log(np.linalg.det(s)) + 3)
    assert rep.loglik == pytest.approx(closed, rel=1e-12)


def test_fit_shape_errors():
    x = np.zeros((5, 2))
    with pytest.raises(ValueError):
        fit(x, "EE", 2, np.ones((5, 3)))
    with pytest.raises(ValueError):
        fit(x[:2], "EE", 2, np.ones((2, 2)) / 2)


@settings(max_examples=25)
@given(st.sampled_from(list(Structure)), st.integers(1, 3), st.integers(2, 3), st.integers(0, 10_000),
       st.sampled_from(["none", "lower", "upper", "range"]))
def test_fit_monotone_and_bounded(structure, G, p, seed, regime):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(60, p)) + 4 * rng.integers(0, G, size=60)[:, None]
    z0 = rng.dirichlet(np.ones(G), size=60)
    spec = ConstraintSpec(a=0.05, b=20.0, regime=regime, schedule_len=5)
    seen = []
    rep = fit(x, structure, G, z0, EmConfig(constraint=spec, max_iter=200),
              callback=lambda t, m, a, b: seen.append((m, a, b)))
    assert np.all(np.diff(rep.loglik_trace) >= -1e-8 * np.maximum(1, np.abs(rep.loglik_trace[1:])))
    for m, a, b in seen:
        ev = m.factors.all_eigvals()
        assert ev.min() >= a - 1e-12 and ev.max() <= b + 1e-12


def test_small_group_rule():
    cfg = EmConfig()
    assert detect_degeneracy([50.0, 3.0], 3, cfg, lower_bound=0.5)
    relaxed = EmConfig(small_groups_repairable=True)
    assert not detect_degeneracy([50.0, 3.0], 3, relaxed, lower_bound=0.5)
    assert detect_degeneracy([50.0, 3.0], 3, relaxed, lower_bound=0.0)
    assert detect_degeneracy([50.0, 0.5], 3, relaxed, lower_bound=0.5)
