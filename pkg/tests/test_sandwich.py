"""Variance estimators against dense scipy oracles and closed-form identities."""

import numpy as np
import pytest

from crtgee import (
    Cluster,
    CorrectionSingularityError,
    EstimatorKind,
    Family,
    FixedSize,
    Link,
    MeanModel,
    ModelSpec,
    Scenario,
    TrialDataset,
    UnsupportedDesignError,
    UsageError,
    WorkingCorrelation,
    avg,
    compute_estimates,
    correction_context,
    fit_gee,
    generate_trial,
    mbn,
    model_based,
    robust_sandwich,
)

from _dense_oracle import dense_estimates, rel_err

KIND_NAMES = {
    EstimatorKind.MB: "mb",
    EstimatorKind.ROBUST: "robust",
    EstimatorKind.KC: "kc",
    EstimatorKind.MD: "md",
    EstimatorKind.FG: "fg",
    EstimatorKind.MBN: "mbn",
    EstimatorKind.AVG: "avg",
}

ALL_SPECS = [
    ModelSpec(Family.BINOMIAL, Link.LOG),
    ModelSpec(Family.BINOMIAL, Link.IDENTITY),
    ModelSpec(Family.BINOMIAL, Link.LOGIT),
    ModelSpec(Family.POISSON, Link.LOG),
    ModelSpec(Family.POISSON, Link.IDENTITY),
    ModelSpec(Family.GAUSSIAN, Link.IDENTITY),
]


def simulated(n_clusters=10, m=12, pi0=0.3, icc=0.05, seed=101, rep=0):
    sc = Scenario(n_clusters=n_clusters, sizes=FixedSize(m), pi0=pi0, pi1=pi0, icc=icc, seed=seed)
    return generate_trial(sc, rep)


def two_cluster_trial():
    return TrialDataset(
        (
            Cluster(id="a", arm=0, outcomes=np.array([1.0, 0.0, 0.0])),
            Cluster(id="b", arm=1, outcomes=np.array([1.0, 1.0, 0.0])),
        )
    )


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.label())
def test_all_estimators_match_dense_oracle(spec):
    data = simulated(n_clusters=8, m=7, seed=41)
    fit = fit_gee(data, spec)
    got = compute_estimates(fit)
    want = dense_estimates(
        data, spec.family.value, spec.link.value, fit.beta, fit.alpha_hat, fit.phi_hat
    )
    for kind, est in got.items():
        assert rel_err(est.cov, want[KIND_NAMES[kind]]) < 1e-10, kind


def test_kc_md_match_observation_space_leverage_form():
    # the score-space multipliers must agree with the classical
    # D'V^{-1}(I - H_i)^{-1/2}(y - mu) residual form, cluster by cluster
    data = simulated(n_clusters=6, m=5, seed=77)
    fit = fit_gee(data, ModelSpec(Family.BINOMIAL, Link.LOGIT))
    got = compute_estimates(fit, kinds=(EstimatorKind.KC, EstimatorKind.MD))
    want = dense_estimates(
        data, "binomial", "logit", fit.beta, fit.alpha_hat, fit.phi_hat
    )
    assert rel_err(got[EstimatorKind.KC].cov, want["kc_resid"]) < 1e-10
    assert rel_err(got[EstimatorKind.MD].cov, want["md_resid"]) < 1e-10


def test_leverage_factors_sum_to_identity():
    data = simulated(n_clusters=12, m=4, seed=3)
    fit = fit_gee(data, ModelSpec(Family.POISSON, Link.LOG))
    ctx = correction_context(fit)
    assert np.max(np.abs(ctx.identity_gap())) < 1e-10
    assert 0.0 < ctx.q_max < 1.0
    for cell in ctx.cells:
        assert np.all(cell.vals > -1e-12)
        assert np.all(cell.vals < 1.0 + 1e-12)


def test_intercept_only_scalar_identities():
    # equal cluster sizes give every cluster the same leverage 1/N, so
    # KC and MD are exact scalar inflations of the robust matrix
    data = simulated(n_clusters=10, m=6, seed=59)
    spec = ModelSpec(Family.BINOMIAL, Link.LOGIT, MeanModel.INTERCEPT_ONLY)
    fit = fit_gee(data, spec)
    n = fit.n_clusters
    got = compute_estimates(
        fit, kinds=(EstimatorKind.ROBUST, EstimatorKind.KC, EstimatorKind.MD)
    )
    v_rob = got[EstimatorKind.ROBUST].cov[0, 0]
    assert got[EstimatorKind.KC].cov[0, 0] == pytest.approx(v_rob * n / (n - 1), rel=1e-12)
    assert got[EstimatorKind.MD].cov[0, 0] == pytest.approx(v_rob * (n / (n - 1)) ** 2, rel=1e-12)


def test_intercept_only_fg_with_unit_bound_equals_kc():
    data = simulated(n_clusters=8, m=5, seed=67)
    spec = ModelSpec(Family.POISSON, Link.LOG, MeanModel.INTERCEPT_ONLY)
    fit = fit_gee(data, spec)
    kc = robust_sandwich(fit, (EstimatorKind.KC,))[0]
    fg = robust_sandwich(fit, (EstimatorKind.FG,), fg_bound=1.0)[0]
    assert rel_err(fg.cov, kc.cov) < 1e-12


def test_fg_cap_engages_on_dominant_cluster():
    # one huge cluster against tiny ones pushes its leverage diagonal
    # past the cap, so the bounded and unbounded FG must differ
    data = TrialDataset(
        (
            Cluster(id=0, arm=0, outcomes=np.array([1.0] * 12 + [0.0] * 28)),
            Cluster(id=1, arm=0, outcomes=np.array([1.0, 0.0])),
            Cluster(id=2, arm=1, outcomes=np.array([1.0, 1.0, 0.0])),
            Cluster(id=3, arm=1, outcomes=np.array([0.0, 1.0])),
        )
    )
    fit = fit_gee(data, ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    ctx = correction_context(fit)
    assert max(float(np.max(cell.diag)) for cell in ctx.cells) > 0.75
    capped = robust_sandwich(fit, (EstimatorKind.FG,), fg_bound=0.75)[0]
    loose = robust_sandwich(fit, (EstimatorKind.FG,), fg_bound=0.999999)[0]
    assert capped.cov[1, 1] < loose.cov[1, 1]


def test_fg_bound_validation():
    data = simulated(seed=5)
    fit = fit_gee(data, ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(UsageError):
            robust_sandwich(fit, (EstimatorKind.FG,), fg_bound=bad)


def test_hc0_reduction_with_singleton_clusters():
    # every cluster of size one turns the robust sandwich into the
    # classical HC0 heteroscedasticity-consistent OLS covariance
    rng = np.random.default_rng(15)
    clusters = [
        Cluster(id=i, arm=i % 2, outcomes=np.array([float(rng.integers(0, 2))]))
        for i in range(30)
    ]
    data = TrialDataset(tuple(clusters))
    fit = fit_gee(data, ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    X = np.array([[1.0, float(c.arm)] for c in data.clusters])
    y = np.array([float(c.outcomes[0]) for c in data.clusters])
    resid = y - X @ fit.beta
    bread = np.linalg.inv(X.T @ X)
    hc0 = bread @ (X.T * resid**2) @ X @ bread
    rob = robust_sandwich(fit)[0]
    assert rel_err(rob.cov, hc0) < 1e-10


def test_model_based_matches_ols_covariance():
    rng = np.random.default_rng(16)
    clusters = [
        Cluster(id=i, arm=i % 2, outcomes=np.array([float(rng.integers(0, 2))]))
        for i in range(24)
    ]
    data = TrialDataset(tuple(clusters))
    fit = fit_gee(data, ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    X = np.array([[1.0, float(c.arm)] for c in data.clusters])
    y = np.array([float(c.outcomes[0]) for c in data.clusters])
    resid = y - X @ fit.beta
    sigma2 = float(resid @ resid) / (len(y) - 2)
    ols = sigma2 * np.linalg.inv(X.T @ X)
    mb = model_based(fit)
    assert rel_err(mb.cov, ols) < 1e-10


def test_mbn_arithmetic_pieces():
    # N = 10 clusters of 10 observations: c = (99/98)(10/9), delta = 0.25
    data = simulated(n_clusters=10, m=10, seed=91)
    fit = fit_gee(data, ModelSpec(Family.BINOMIAL, Link.LOGIT))
    est = mbn(fit)
    c = (99.0 / 98.0) * (10.0 / 9.0)
    delta = 0.25
    binv = np.linalg.inv(fit.info_sum)
    meat = sum(np.outer(w.score, w.score) for w in fit.clusters)
    phi_mbn = max(1.0, float(np.trace(c * (binv @ meat))) / 2.0)
    want = c * (binv @ meat @ binv) + delta * phi_mbn * binv
    assert est.diagnostics["mbn_phi"] == pytest.approx(phi_mbn, rel=1e-12)
    assert rel_err(est.cov, (want + want.T) / 2.0) < 1e-12
    assert phi_mbn >= 1.0


def test_mbn_delta_saturates_at_half_for_small_n():
    data = simulated(n_clusters=4, m=8, seed=29)
    fit = fit_gee(data, ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    est = mbn(fit)
    binv = np.linalg.inv(fit.info_sum)
    meat = sum(np.outer(w.score, w.score) for w in fit.clusters)
    total_obs = sum(w.m for w in fit.clusters)
    c = ((total_obs - 1) / (total_obs - 2)) * (4.0 / 3.0)
    phi_mbn = est.diagnostics["mbn_phi"]
    # N = 4 puts 2/(N-2) = 1 above the 0.5 ceiling
    want = c * (binv @ meat @ binv) + 0.5 * phi_mbn * binv
    assert rel_err(est.cov, (want + want.T) / 2.0) < 1e-12


def test_mbn_rejects_two_clusters():
    fit = fit_gee(two_cluster_trial(), ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    with pytest.raises(UnsupportedDesignError):
        mbn(fit)


def test_two_clusters_make_kc_and_md_singular():
    # with one cluster per arm the two leverage matrices are
    # complementary projections, so I - Q_i is exactly singular
    fit = fit_gee(two_cluster_trial(), ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    ctx = correction_context(fit)
    assert ctx.q_max == pytest.approx(1.0, abs=1e-10)
    for kind in (EstimatorKind.KC, EstimatorKind.MD):
        with pytest.raises(CorrectionSingularityError):
            robust_sandwich(fit, (kind,))
    # robust and FG remain computable
    robust_sandwich(fit, (EstimatorKind.ROBUST, EstimatorKind.FG))


def test_se_ordering_robust_kc_md():
    # whenever every Q_i eigenvalue is below one, the arm-effect variance
    # is ordered robust <= KC <= MD, with AVG between KC and MD
    for seed in range(20):
        data = simulated(n_clusters=8, m=10, seed=200 + seed)
        fit = fit_gee(data, ModelSpec(Family.BINOMIAL, Link.LOGIT))
        got = compute_estimates(
            fit,
            kinds=(EstimatorKind.ROBUST, EstimatorKind.KC, EstimatorKind.MD, EstimatorKind.AVG),
        )
        se_r = got[EstimatorKind.ROBUST].se()
        se_kc = got[EstimatorKind.KC].se()
        se_md = got[EstimatorKind.MD].se()
        se_avg = got[EstimatorKind.AVG].se()
        assert se_r <= se_kc * (1 + 1e-12)
        assert se_kc <= se_md * (1 + 1e-12)
        assert se_kc <= se_avg <= se_md


def test_duplicating_clusters_halves_robust_covariance():
    data = simulated(n_clusters=6, m=5, seed=111)
    corr = WorkingCorrelation.exchangeable(alpha=0.2)
    spec = ModelSpec(Family.BINOMIAL, Link.LOGIT)
    fit = fit_gee(data, spec, corr)
    doubled = TrialDataset(
        tuple(
            Cluster(id=(c.id, k), arm=c.arm, outcomes=c.outcomes.copy())
            for k in (0, 1)
            for c in data.clusters
        )
    )
    fit2 = fit_gee(doubled, spec, corr)
    assert np.allclose(fit.beta, fit2.beta, atol=1e-9)
    rob1 = robust_sandwich(fit)[0]
    rob2 = robust_sandwich(fit2)[0]
    assert rel_err(rob2.cov, rob1.cov / 2.0) < 1e-8
    # model-based: bread doubles; the dispersion denominator shifts by p
    mb1 = model_based(fit)
    mb2 = model_based(fit2)
    n_obs = data.n_obs
    assert rel_err(mb2.cov * 2.0 * fit.phi_hat / fit2.phi_hat, mb1.cov) < 1e-8
    assert fit2.phi_hat == pytest.approx(fit.phi_hat * (n_obs - 2) * 2 / (2 * n_obs - 2), rel=1e-9)


def test_avg_requires_kc_and_md_kinds():
    data = simulated(seed=121)
    fit = fit_gee(data, ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    kc, md = robust_sandwich(fit, (EstimatorKind.KC, EstimatorKind.MD))
    est = avg(kc, md)
    assert np.allclose(est.cov, (kc.cov + md.cov) / 2.0, atol=0)
    with pytest.raises(UsageError):
        avg(md, kc)


def test_compute_estimates_preserves_request_order():
    data = simulated(seed=131)
    fit = fit_gee(data, ModelSpec(Family.POISSON, Link.IDENTITY))
    kinds = (EstimatorKind.MD, EstimatorKind.MB, EstimatorKind.AVG)
    got = compute_estimates(fit, kinds=kinds)
    assert tuple(got.keys()) == kinds
    # AVG pulled in KC internally without emitting it
    assert EstimatorKind.KC not in got


def test_robust_sandwich_rejects_non_multiplicative_kinds():
    data = simulated(seed=141)
    fit = fit_gee(data, ModelSpec(Family.GAUSSIAN, Link.IDENTITY))
    with pytest.raises(UsageError):
        robust_sandwich(fit, (EstimatorKind.MBN,))


def test_covariances_are_symmetric_psd():
    data = simulated(n_clusters=14, m=8, seed=151)
    for spec in ALL_SPECS:
        fit = fit_gee(data, spec)
        for kind, est in compute_estimates(fit).items():
            assert np.array_equal(est.cov, est.cov.T), kind
            vals = np.linalg.eigvalsh(est.cov)
            assert np.min(vals) > -1e-14, kind
