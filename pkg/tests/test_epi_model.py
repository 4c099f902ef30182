import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit
from scipy.stats import multivariate_normal, norm

from interplik.epi_model import (
    TRANSFORM,
    TRUTH,
    Cohort,
    EpiDesign,
    EpiParams,
    EvalCounter,
    build_context,
    conditional_z_given_za,
    default_spacing,
    fit_epi,
    loglik_direct,
    loglik_interp,
    make_objective,
    simulate_cohort,
    stage1_term,
    stage2_term,
)
from interplik.errors import InvalidInputError
from interplik.interp_core import NodeGrid, WindowSpec
from interplik.optimize import fd_hessian, to_unconstrained
from interplik.quadrature import gauss_hermite

DESIGN = EpiDesign()
RULE = gauss_hermite(8)


@pytest.fixture(scope="module")
def cohort():
    return simulate_cohort(DESIGN, TRUTH, 11)


@pytest.fixture(scope="module")
def context(cohort):
    return build_context(cohort)


def perturbed(scale=1.05):
    v = TRUTH.as_array()
    return EpiParams.from_array([v[0] + 0.05, v[1] * scale, v[2] - 0.1, v[3] / scale, 0.27, 4.8, 0.72])


# --- parameters and design -------------------------------------------------


def test_param_validation():
    with pytest.raises(InvalidInputError):
        EpiParams(sigma_z=0.0)
    with pytest.raises(InvalidInputError):
        EpiParams(rho=1.0)
    with pytest.raises(InvalidInputError):
        EpiParams(scale=-1.0)
    with pytest.raises(InvalidInputError):
        EpiDesign(100, 0)
    with pytest.raises(InvalidInputError):
        EpiDesign(100, 101)


def test_truth_defaults():
    assert TRUTH.as_array().tolist() == pytest.approx([0, 1, 0, math.sqrt(100 / 9), 0.3, 4.733, 0.693])
    assert EpiParams.from_array(TRUTH.as_array()) == TRUTH


# --- simulation --------------------------------------------------------------


def test_cohort_shapes(cohort):
    assert cohort.n_stage1_only == 63131
    assert cohort.n_stage2 == 219
    assert cohort.stage1_za.shape == (63131,)
    assert set(np.unique(cohort.stage1_y)) <= {0, 1}


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_prevalence(seed):
    c = simulate_cohort(DESIGN, TRUTH, seed)
    y = np.concatenate([c.stage1_y, c.stage2_y])
    se = math.sqrt(0.003 * 0.997 / y.size)
    assert abs(y.mean() - 0.003) <= 4 * se


def test_simulation_is_deterministic():
    a = simulate_cohort(EpiDesign(5000, 50), TRUTH, 99)
    b = simulate_cohort(EpiDesign(5000, 50), TRUTH, 99)
    for name in ("stage1_y", "stage1_za", "stage2_y", "stage2_z", "stage2_za"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = simulate_cohort(EpiDesign(5000, 50), TRUTH, 100)
    assert not np.array_equal(a.stage1_za, c.stage1_za)


def test_large_sample_correlation_and_error_variance():
    c = simulate_cohort(EpiDesign(1_000_000, 1_000_000), TRUTH, 5)
    assert c.n_stage1_only == 0
    assert np.corrcoef(c.stage2_z, c.stage2_za)[0, 1] == pytest.approx(0.3, abs=0.01)
    # z_a - z has variance sigma_a^2 + sigma_z^2 - 2 rho sigma_a sigma_z, which is 91/9 at truth
    assert np.var(c.stage2_za - c.stage2_z) == pytest.approx(91 / 9, rel=0.01)


# --- conditional distribution -----------------------------------------------


def test_conditional_examples():
    mean, sd = conditional_z_given_za(TRUTH, 0.0)
    assert mean == 0.0
    assert sd == pytest.approx(math.sqrt(0.91), rel=1e-15)
    assert sd == pytest.approx(0.95394, abs=5e-6)
    mean, _ = conditional_z_given_za(TRUTH, 1.0)
    assert mean == pytest.approx(0.09, rel=1e-14)


@given(st.floats(-20, 20))
def test_conditional_independent_when_uncorrelated(z_a):
    p = EpiParams(mu_z=0.7, sigma_z=1.3, rho=0.0)
    assert conditional_z_given_za(p, z_a) == (0.7, 1.3)


def test_conditional_degenerate_limit():
    p = EpiParams(mu_z=0.5, sigma_z=2.0, mu_a=0.5, sigma_a=2.0, rho=1 - 1e-12)
    mean, sd = conditional_z_given_za(p, 3.0)
    assert mean == pytest.approx(3.0, abs=1e-9)
    assert sd < 1e-5


# --- likelihood terms --------------------------------------------------------


def _dense_stage1(y, z_a, p, n=2000):
    mean, sd = conditional_z_given_za(p, z_a)
    z = np.linspace(mean - 10 * sd, mean + 10 * sd, n)
    p1 = float(np.trapezoid(expit((z - p.location) / p.scale) * norm.pdf(z, mean, sd), z))
    py = p1 if y == 1 else 1 - p1
    return norm.logpdf(z_a, p.mu_a, p.sigma_a) + math.log(py)


@pytest.mark.parametrize("y,z_a", [(1, 0.0), (0, 0.0), (1, 6.0), (0, -4.0)])
def test_stage1_against_dense_quadrature(y, z_a):
    oracle = _dense_stage1(y, z_a, TRUTH)
    assert stage1_term(y, z_a, TRUTH, gauss_hermite(20)) == pytest.approx(oracle, abs=1e-6)
    # the default 8-point rule is within a few parts in 1e5 of the oracle
    assert stage1_term(y, z_a, TRUTH, RULE) == pytest.approx(oracle, abs=2e-5)


@given(st.floats(-10, 10))
@settings(max_examples=30)
def test_stage1_uncorrelated_marginal(z_a):
    p = EpiParams(rho=0.0)
    marginal = _dense_stage1(1, 0.0, p) - norm.logpdf(0.0, p.mu_a, p.sigma_a)
    got = stage1_term(1, z_a, p, gauss_hermite(20)) - norm.logpdf(z_a, p.mu_a, p.sigma_a)
    assert got == pytest.approx(marginal, abs=1e-6)


def test_stage1_flat_response():
    p = EpiParams(scale=1e6)
    lp = stage1_term(1, 2.0, p, RULE) - norm.logpdf(2.0, p.mu_a, p.sigma_a)
    assert math.exp(lp) == pytest.approx(0.5, abs=1e-5)


def test_stage1_vectorized_matches_scalar():
    za = np.array([-3.0, 0.0, 2.5, 9.0])
    y = np.array([0, 1, 0, 1])
    vec = stage1_term(y, za, TRUTH, RULE)
    for i in range(4):
        assert vec[i] == pytest.approx(stage1_term(int(y[i]), float(za[i]), TRUTH, RULE), rel=1e-14)


def test_stage1_extreme_values_stay_finite():
    out = stage1_term(np.array([1, 0]), np.array([-80.0, 80.0]), TRUTH, RULE)
    assert np.all(np.isfinite(out))


def test_stage2_examples():
    bern = stage2_term(1, 4.733, 0.0, TRUTH) - multivariate_normal.logpdf(
        [4.733, 0.0], [0, 0], _cov(TRUTH)
    )
    assert bern == pytest.approx(math.log(0.5), abs=1e-12)


def _cov(p):
    c = p.rho * p.sigma_z * p.sigma_a
    return [[p.sigma_z**2, c], [c, p.sigma_a**2]]


@pytest.mark.parametrize("y,z,z_a", [(0, 1.0, 2.0), (1, 5.2, -1.0), (0, -2.0, 7.5)])
def test_stage2_against_scipy(y, z, z_a):
    p = TRUTH
    pr = expit((z - p.location) / p.scale)
    oracle = math.log(pr if y else 1 - pr) + multivariate_normal.logpdf([z, z_a], [p.mu_z, p.mu_a], _cov(p))
    assert stage2_term(y, z, z_a, p) == pytest.approx(oracle, abs=1e-10)


def test_stage2_factorizes_when_uncorrelated():
    p = EpiParams(rho=0.0, mu_z=0.3, mu_a=-1.0)
    got = stage2_term(0, 1.1, 0.4, p) - math.log(1 - expit((1.1 - p.location) / p.scale))
    want = norm.logpdf(1.1, 0.3, 1.0) + norm.logpdf(0.4, -1.0, p.sigma_a)
    assert got == pytest.approx(want, abs=1e-12)


def test_stage2_near_unit_correlation():
    p = EpiParams(rho=1 - 1e-13)
    with pytest.raises(InvalidInputError):
        stage2_term(0, 0.0, 0.0, p)


# --- contexts and the two likelihood paths -------------------------------------


def test_context_sample_totals(context):
    assert context.weights_y0.n_samples + context.weights_y1.n_samples == 63131
    assert context.weights_y0.totals.sum() + context.weights_y1.totals.sum() == pytest.approx(63131, rel=1e-12)


def test_default_spacing_is_an_eighth_of_sd(cohort, context):
    assert context.grid.h == pytest.approx(np.std(cohort.stage1_za, ddof=1) / 8)
    assert default_spacing(cohort.stage1_za) == pytest.approx(0.42, abs=0.02)


def test_all_zero_outcomes():
    c = simulate_cohort(EpiDesign(3000, 30), EpiParams(location=40.0), 3)
    assert not c.stage1_y.any()
    ctx = build_context(c)
    assert ctx.weights_y1.n_samples == 0
    assert loglik_interp(TRUTH, ctx, RULE) == pytest.approx(loglik_direct(TRUTH, c, RULE), rel=1e-10)


def test_direct_evaluation_count(cohort):
    counter = EvalCounter()
    loglik_direct(TRUTH, cohort, RULE, counter)
    assert counter.count == 505267


def test_interp_evaluation_count_bounded(cohort, context):
    counter = EvalCounter()
    loglik_interp(TRUTH, context, RULE, counter)
    assert counter.count <= 219 + 2 * context.grid.count * 8
    assert counter.count < 505267 / 50


def test_grid_size_does_not_grow_with_cohort():
    small = build_context(simulate_cohort(EpiDesign(10_000, 100), TRUTH, 1), h=0.42)
    large = build_context(simulate_cohort(EpiDesign(400_000, 100), TRUTH, 1), h=0.42)
    assert large.grid.count <= small.grid.count + 20


def test_single_stage2_person():
    c = Cohort(
        np.zeros(0, np.int8), np.zeros(0), np.array([1], np.int8), np.array([2.0]), np.array([1.0])
    )
    assert loglik_direct(TRUTH, c, RULE) == stage2_term(1, 2.0, 1.0, TRUTH)
    assert loglik_interp(TRUTH, build_context(c), RULE) == stage2_term(1, 2.0, 1.0, TRUTH)


@pytest.mark.parametrize("params", [TRUTH, perturbed(), perturbed(0.9)])
def test_interp_matches_direct(cohort, context, params):
    direct = loglik_direct(params, cohort, RULE)
    interp = loglik_interp(params, context, RULE)
    assert abs(interp - direct) / abs(direct) <= 1e-7


def test_interp_matches_direct_small_cohort():
    c = simulate_cohort(EpiDesign(2000, 40), TRUTH, 8)
    direct = loglik_direct(TRUTH, c, RULE)
    assert loglik_interp(TRUTH, build_context(c), RULE) == pytest.approx(direct, rel=1e-7)


def test_spacing_halving(cohort, context):
    fine = build_context(cohort, h=context.grid.h / 2)
    a = loglik_interp(TRUTH, context, RULE)
    b = loglik_interp(TRUTH, fine, RULE)
    assert abs(a - b) / abs(a) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.8, 1.25), st.floats(-0.5, 0.5))
def test_exact_when_samples_sit_on_nodes(seed, sd_factor, shift):
    window = WindowSpec()
    grid = NodeGrid(-12.0, 0.5, 49)
    rng = np.random.default_rng(seed)
    idx = rng.integers(window.margin + 1, grid.count - window.margin - 1, 300)
    c = Cohort(
        rng.integers(0, 2, 300).astype(np.int8),
        grid.node(idx),
        np.array([0, 1], np.int8),
        np.array([0.1, 5.0]),
        np.array([0.3, 2.0]),
    )
    ctx = build_context(c, window=window, grid=grid)
    p = EpiParams(mu_z=shift, sigma_z=sd_factor, location=2.0, scale=0.8)
    direct = loglik_direct(p, c, RULE)
    assert loglik_interp(p, ctx, RULE) == pytest.approx(direct, rel=1e-10)


def test_text_round_trip():
    c = simulate_cohort(EpiDesign(500, 20), TRUTH, 4)
    text = c.to_text()
    assert text.splitlines()[0] == "stage,y,z,z_a"
    assert text.splitlines()[1].startswith("1,") and ",," in text.splitlines()[1]
    back = Cohort.from_text(text)
    for name in ("stage1_y", "stage1_za", "stage2_y", "stage2_z", "stage2_za"):
        np.testing.assert_array_equal(getattr(back, name), getattr(c, name))


def test_text_rejects_unknown_stage():
    with pytest.raises(InvalidInputError):
        Cohort.from_text("stage,y,z,z_a\n3,0,,1.0\n")


def test_objective_outside_domain_is_minus_inf(cohort):
    obj = make_objective(cohort, RULE)
    bad = TRUTH.as_array()
    bad[1] = -1.0
    assert obj(bad) == -math.inf


# --- fitting -------------------------------------------------------------------


def test_fd_hessian_against_quadratic_fit(cohort, context):
    """Central differences agree with a least-squares quadratic fit along each axis."""
    obj = make_objective(cohort, RULE, context)
    fit = fit_epi(cohort, TRUTH, context=context)
    u = fit.unconstrained_estimates

    from interplik.optimize import from_unconstrained

    def g(w):
        return obj(from_unconstrained(TRANSFORM, w))

    H = fd_hessian(g, u, 1e-4)
    for i in range(u.size):
        step = 0.02 / math.sqrt(max(-H[i, i], 1e-6))
        ts = np.linspace(-step, step, 9)
        vals = []
        for t in ts:
            w = u.copy()
            w[i] += t
            vals.append(g(w))
        curv = 2 * np.polyfit(ts, vals, 2)[0]
        assert H[i, i] == pytest.approx(curv, rel=0.01)


def test_fit_recovers_truth_and_paths_agree(cohort, context):
    interp = fit_epi(cohort, TRUTH, context=context)
    direct = fit_epi(cohort, TRUTH, use_interpolation=False)
    assert interp.converged and interp.hessian_pd
    np.testing.assert_allclose(interp.estimates, direct.estimates, rtol=1e-4, atol=1e-5)
    z = (interp.estimates - TRUTH.as_array()) / interp.se
    assert np.all(np.abs(z) < 5)
    assert to_unconstrained(TRANSFORM, interp.estimates) == pytest.approx(interp.unconstrained_estimates)


@pytest.mark.slow
def test_estimates_near_truth_over_twenty_cohorts():
    hits = np.zeros(7, dtype=int)
    for seed in range(20):
        c = simulate_cohort(DESIGN, TRUTH, 1000 + seed)
        fit = fit_epi(c, TRUTH)
        if fit.se is None:
            continue
        hits += np.abs(fit.estimates - TRUTH.as_array()) <= 4 * fit.se
    assert np.all(hits >= 19), hits
