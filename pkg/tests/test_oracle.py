import math

import numpy as np
import pytest

from lcest.models import get_model, get_true, sample_true
from lcest.oracle import (
    OracleError,
    QuadratureGrid,
    default_grid,
    quad_empirical_loss,
    quad_lambda_estimates,
    quad_lambda_imai,
    quad_posterior_expectation,
    quad_wbic,
)

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Conjugate closed forms.  For the N(theta,1) model with N(0,1) prior the
# beta-tempered posterior is exactly N(m, v) with v = 1/(1 + beta n) and
# m = beta * sum(x) / (1 + beta n), which yields every quantity below in
# closed form; the quadrature must reproduce them to tight absolute error.


def _conjugate_moments(xs, beta):
    n = xs.size
    v = 1.0 / (1.0 + beta * n)
    m = beta * float(xs.sum()) * v
    return m, v


def _closed_wbic(xs, beta):
    n = xs.size
    sx = float(xs.sum())
    sxx = float(np.dot(xs, xs))
    m, v = _conjugate_moments(xs, beta)
    e_sq = sxx - 2.0 * m * sx + n * (m * m + v)
    return 0.5 * n * LOG_2PI + 0.5 * e_sq


def _closed_lambda_imai(xs, beta):
    n = xs.size
    sx = float(xs.sum())
    m, v = _conjugate_moments(xs, beta)
    # Y = n theta^2 - 2 sx theta with theta ~ N(m, v):
    #   Var(theta^2) = 2v^2 + 4m^2 v,  Cov(theta^2, theta) = 2mv
    var_theta_sq = 2.0 * v * v + 4.0 * m * m * v
    cov_theta_sq = 2.0 * m * v
    var_y = n * n * var_theta_sq + 4.0 * sx * sx * v - 4.0 * n * sx * cov_theta_sq
    return beta * beta * 0.25 * var_y


def _closed_empirical_loss(xs):
    m, v = _conjugate_moments(xs, 1.0)
    s2 = 1.0 + v
    return float(np.mean(0.5 * math.log(2 * math.pi * s2) + 0.5 * (xs - m) ** 2 / s2))


@pytest.fixture(scope="module")
def conj():
    data = sample_true(get_true("normal:0,1"), 80, seed=52)
    return get_model("conjugate-normal"), data


def test_posterior_mean_matches_closed_form(conj):
    model, data = conj
    m, v = _conjugate_moments(data.observations, 1.0)
    got = quad_posterior_expectation(model, data, 1.0, lambda th: th[0])
    assert got == pytest.approx(m, abs=1e-8)
    got2 = quad_posterior_expectation(model, data, 1.0, lambda th: th[0] ** 2)
    assert got2 == pytest.approx(v + m * m, abs=1e-8)


def test_tempered_posterior_mean(conj):
    model, data = conj
    for beta in (0.05, 0.35, 2.0):
        m, _ = _conjugate_moments(data.observations, beta)
        got = quad_posterior_expectation(model, data, beta, lambda th: th[0])
        assert got == pytest.approx(m, abs=1e-8), beta


def test_wbic_matches_closed_form(conj):
    model, data = conj
    for beta in (0.1, 0.5, 1.0):
        want = _closed_wbic(data.observations, beta)
        assert quad_wbic(model, data, beta) == pytest.approx(want, abs=1e-7), beta


def test_lambda_imai_matches_closed_form(conj):
    model, data = conj
    for beta in (0.1, 0.5, 1.0):
        want = _closed_lambda_imai(data.observations, beta)
        assert quad_lambda_imai(model, data, beta) == pytest.approx(want, rel=1e-7), beta


def test_empirical_loss_matches_closed_form(conj):
    model, data = conj
    want = _closed_empirical_loss(data.observations)
    assert quad_empirical_loss(model, data) == pytest.approx(want, abs=1e-8)


# ---------------------------------------------------------------------------
# Structural properties on the grid route


def test_wbic_strictly_decreasing_in_beta():
    data = sample_true(get_true("normal:0,1"), 120, seed=9)
    model = get_model("example1")
    betas = np.linspace(0.05, 1.0, 20)
    vals = [quad_wbic(model, data, float(b)) for b in betas]
    diffs = np.diff(vals)
    assert np.all(diffs < 0.0)


def test_derivative_identity():
    """d WBIC / d beta = -Var_beta[sum log p] = -lambda_i(beta) / beta^2."""
    data = sample_true(get_true("normal:0,1"), 60, seed=14)
    for mid in ("example1", "conjugate-normal"):
        model = get_model(mid)
        for beta in (0.2, 0.7):
            h = 1e-4 * beta
            num = (quad_wbic(model, data, beta + h) - quad_wbic(model, data, beta - h)) / (2 * h)
            want = -quad_lambda_imai(model, data, beta) / beta**2
            assert num == pytest.approx(want, rel=1e-4), (mid, beta)


def test_grid_refinement_stability():
    data = sample_true(get_true("normal:0,1"), 100, seed=33)
    model = get_model("example1")
    grid = default_grid(1)
    fine = grid.refined()
    for beta in (0.2, 1.0):
        a = quad_wbic(model, data, beta, grid)
        b = quad_wbic(model, data, beta, fine)
        assert abs(a - b) / abs(b) < 1e-6
    est_a = quad_lambda_estimates(model, data, beta0_pairs=((1.0, 5.0),), grid=grid)
    est_b = quad_lambda_estimates(model, data, beta0_pairs=((1.0, 5.0),), grid=fine)
    assert est_a.lambda_t == pytest.approx(est_b.lambda_t, rel=1e-6)
    assert est_a.lambda_i == pytest.approx(est_b.lambda_i, rel=1e-6)


def test_two_dim_grid_refinement():
    data = sample_true(get_true("normal:0.2,1.3"), 40, seed=8)
    model = get_model("normal-meanvar")
    coarse = QuadratureGrid(257)
    fine = QuadratureGrid(513)
    a = quad_wbic(model, data, 0.5, coarse)
    b = quad_wbic(model, data, 0.5, fine)
    assert abs(a - b) / abs(b) < 1e-6


def test_grid_invariants():
    with pytest.raises(ValueError):
        QuadratureGrid(32)  # too coarse
    with pytest.raises(ValueError):
        QuadratureGrid(128, lo=3.0, hi=-3.0)
    g = QuadratureGrid(65)
    nodes, logw = g.axis()
    assert nodes.shape == (65,)
    assert np.all(np.isfinite(logw))  # positive weights
    r = g.refined()
    assert r.nodes_per_dim == 129
    assert (r.lo, r.hi) == (g.lo, g.hi)
    with pytest.raises(ValueError):
        g.points(3)


def test_all_mass_outside_support_raises():
    # every grid node maps to a rate so tiny the prior gives it -inf
    data = sample_true(get_true("poisson:3"), 30, seed=2)
    model = get_model("poisson-mix:1")
    bad = QuadratureGrid(64, lo=-2000.0, hi=-1500.0)
    with pytest.raises(OracleError):
        quad_wbic(model, data, 1.0, bad)


def test_estimates_bundle_consistency():
    data = sample_true(get_true("normal:0,1"), 150, seed=4)
    model = get_model("example1")
    est = quad_lambda_estimates(model, data, beta0_pairs=((1.0, 1.5), (1.0, 5.0)))
    logn = math.log(150)
    # lambda_w recomputable from the stored wbic values
    for (b1, b2), lam in est.lambda_w.items():
        want = (est.wbic_by_beta0[b1] - est.wbic_by_beta0[b2]) / (logn / b1 - logn / b2)
        assert lam == pytest.approx(want, abs=1e-12)
    assert est.lambda_t == pytest.approx(
        (est.wbic_by_beta0[1.0] - est.n_times_tn) / logn, abs=1e-12
    )
    # example1 against N(0,1): the true learning coefficient is 1/2 and the
    # quadrature estimators should sit very near it at this n
    assert abs(est.lambda_i - 0.5) < 0.05
    assert abs(est.lambda_w[(1.0, 5.0)] - 0.5) < 0.05
