"""GEE fitting with an exchangeable working correlation.

Fisher scoring on the marginal mean model g(mu_ij) = x_i' beta, alternating
each iteration with moment re-estimation of the exchangeable correlation
alpha and the dispersion phi. The mean model contains at most an intercept
and a cluster-level arm indicator, so the covariate row is constant within
every cluster; the scoring loop exploits that to reduce each cluster to
scalar sufficient statistics, while the converged fit caches the full
per-cluster matrices needed by the variance estimators.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .data import TrialDataset
from .errors import NonConvergenceError, UsageError
from .families import (
    Family,
    MeanModel,
    ModelSpec,
    link_apply,
    link_inverse,
    link_mu_deriv,
    mean_in_range,
    variance_function,
)

#: margin keeping R(alpha) positive definite after clamping
ALPHA_MARGIN = 1e-6


class CorrelationKind(enum.Enum):
    EXCHANGEABLE = "exchangeable"
    INDEPENDENCE = "independence"


@dataclass(frozen=True)
class WorkingCorrelation:
    """Working correlation choice; ``alpha=None`` means moment-estimated."""

    kind: CorrelationKind = CorrelationKind.EXCHANGEABLE
    alpha: float | None = None

    def __post_init__(self):
        if self.kind is CorrelationKind.INDEPENDENCE:
            if self.alpha not in (None, 0.0):
                raise UsageError("independence working correlation fixes alpha = 0")
            object.__setattr__(self, "alpha", 0.0)

    @classmethod
    def exchangeable(cls, alpha=None):
        return cls(CorrelationKind.EXCHANGEABLE, alpha)

    @classmethod
    def independence(cls):
        return cls(CorrelationKind.INDEPENDENCE)


def alpha_bounds(max_cluster_size):
    """Valid exchangeable-correlation interval for the largest cluster."""
    if max_cluster_size < 2:
        return (-1.0 + ALPHA_MARGIN, 1.0 - ALPHA_MARGIN)
    return (-1.0 / (max_cluster_size - 1) + ALPHA_MARGIN, 1.0 - ALPHA_MARGIN)


@dataclass
class AlphaPhiEstimate:
    alpha: float
    phi: float
    clamped: bool = False


def estimate_alpha_phi(pearson_residuals, n_params, max_cluster_size=None):
    """Moment estimators of the exchangeable correlation and dispersion.

    Parameters
    ----------
    pearson_residuals : sequence of 1-D arrays
        Per-cluster Pearson residuals (y - mu)/sqrt(V(mu)).
    n_params : int
        Number of mean-model parameters subtracted from both denominators.
    max_cluster_size : int, optional
        Used for the positive-definiteness clamp; inferred when omitted.
    """
    resids = [np.asarray(e, dtype=float) for e in pearson_residuals]
    sizes = [e.size for e in resids]
    if max_cluster_size is None:
        max_cluster_size = max(sizes)

    n_obs = sum(sizes)
    ss = sum(float(e @ e) for e in resids)
    phi = ss / (n_obs - n_params)

    n_pairs = sum(m * (m - 1) // 2 for m in sizes)
    if n_pairs == 0:
        return AlphaPhiEstimate(alpha=0.0, phi=phi)
    pair_denom = n_pairs - n_params
    if pair_denom <= 0 or phi <= 0.0:
        # too few within-cluster pairs to identify alpha
        return AlphaPhiEstimate(alpha=0.0, phi=phi, clamped=True)

    cross = sum((float(np.sum(e)) ** 2 - float(e @ e)) / 2.0 for e in resids)
    alpha_raw = (cross / pair_denom) / phi

    lo, hi = alpha_bounds(max_cluster_size)
    alpha = min(max(alpha_raw, lo), hi)
    return AlphaPhiEstimate(alpha=alpha, phi=phi, clamped=(alpha != alpha_raw))


def initialize_beta(data, spec):
    """Starting coefficients from (clamped) arm proportions on the link scale.

    The clamp keeps log and logit links defined when an arm has zero (or
    all) events; the Gaussian family starts from the raw proportions.
    """
    summary = data.arm_summary()
    p0 = summary[0]["proportion"]
    p1 = summary[1]["proportion"]
    pooled = (summary[0]["events"] + summary[1]["events"]) / data.n_obs

    if spec.family is not Family.GAUSSIAN:
        floor = 0.5 / data.n_obs
        clamp = lambda x: min(max(x, floor), 1.0 - floor)
        p0, p1, pooled = clamp(p0), clamp(p1), clamp(pooled)

    if spec.mean_model is MeanModel.INTERCEPT_ONLY:
        return np.array([float(link_apply(spec.link, pooled))])
    g0 = float(link_apply(spec.link, p0))
    g1 = float(link_apply(spec.link, p1))
    return np.array([g0, g1 - g0])


# -- closed-form exchangeable inverse ---------------------------------------
#
# R(alpha)^{-1} = (1/(1-alpha)) [I - (alpha / (1 + (m-1) alpha)) J]
# so R^{-1} x costs O(m), and 1' R^{-1} x = sum(x) / (1 + (m-1) alpha).


def exch_rinv_apply(x, alpha):
    """R(alpha)^{-1} @ x for an exchangeable correlation of x's length."""
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    shrink = alpha / (1.0 + (m - 1) * alpha)
    return (x - shrink * x.sum(axis=0)) / (1.0 - alpha)


@dataclass
class ClusterWork:
    """Converged per-cluster quantities consumed by the variance estimators."""

    id: object
    arm: int
    m: int
    x: np.ndarray          # covariate row (p,), constant within the cluster
    mu: float              # fitted mean, constant within the cluster
    deriv: float           # dmu/deta at the fitted linear predictor
    var: float             # working variance V(mu)
    resid: np.ndarray      # raw residuals y - mu, (m,)
    a_sqrt: float          # sqrt V(mu); with R(alpha) this factors V_i
    D: np.ndarray          # derivative matrix dmu_i/dbeta', (m, p)
    info: np.ndarray       # D' V^{-1} D, (p, p)
    score: np.ndarray      # D' V^{-1} (y - mu), (p,)


@dataclass
class GeeFit:
    """A converged GEE fit plus the cached pieces every estimator reuses."""

    data: TrialDataset
    spec: ModelSpec
    corr: WorkingCorrelation
    beta: np.ndarray
    alpha_hat: float
    phi_hat: float
    converged: bool
    iterations: int
    score_norm: float
    alpha_clamped: bool
    clusters: list = field(default_factory=list)   # ClusterWork, dataset order
    info_sum: np.ndarray = None                    # B = sum_i D' V^{-1} D

    @property
    def n_clusters(self):
        return self.data.n_clusters

    @property
    def n_params(self):
        return self.beta.size

    def sigma1(self):
        """N-normalized bread matrix, B / N."""
        return self.info_sum / self.n_clusters

    def fitted_arm_means(self):
        """Fitted mean per arm (identical across clusters of an arm)."""
        out = {}
        for w in self.clusters:
            out[w.arm] = w.mu
        return out


def _covariate_row(arm, mean_model):
    if mean_model is MeanModel.INTERCEPT_ONLY:
        return np.array([1.0])
    return np.array([1.0, float(arm)])


def _cluster_stats(data, spec):
    """Static per-cluster pieces: covariate row, size, outcome sum."""
    rows = []
    for c in data.clusters:
        rows.append((c, _covariate_row(c.arm, spec.mean_model), c.size, float(c.outcomes.sum())))
    return rows


def fit_gee(
    data,
    spec,
    corr=None,
    *,
    max_iter=50,
    beta_tol=1e-8,
    score_tol=1e-4,
    max_step_halvings=10,
):
    """Fit the marginal model by Fisher scoring.

    Raises
    ------
    NonConvergenceError
        When the iteration or step-halving budget is exhausted, the
        information matrix is singular, or the final score fails the
        first-order condition. The exception carries the iteration count,
        the last coefficient vector, and a reason tag; simulation code
        counts these events as the convergence-rate outcome.
    """
    if corr is None:
        corr = WorkingCorrelation.exchangeable()
    stats = _cluster_stats(data, spec)
    m_max = max(m for (_, _, m, _) in stats)
    estimate_corr = corr.kind is CorrelationKind.EXCHANGEABLE and corr.alpha is None
    if corr.alpha is not None and corr.alpha != 0.0:
        lo, hi = alpha_bounds(m_max)
        if not lo <= corr.alpha <= hi:
            raise UsageError(
                f"fixed alpha {corr.alpha} outside the valid range [{lo:.6g}, {hi:.6g}]"
            )

    beta = initialize_beta(data, spec)
    alpha = 0.0 if corr.alpha is None else float(corr.alpha)
    phi = 1.0
    clamped_any = False
    p = spec.n_params

    def cluster_means(b):
        # eta and mu are scalar per cluster because the covariate row is
        # constant within a cluster
        etas = np.array([float(x @ b) for (_, x, _, _) in stats])
        mus = np.asarray(link_inverse(spec.link, etas))
        return etas, mus

    def means_valid(b):
        etas = np.array([float(x @ b) for (_, x, _, _) in stats])
        mus = np.asarray(link_inverse(spec.link, etas))
        return mean_in_range(spec.family, mus)

    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        etas, mus = cluster_means(beta)
        derivs = np.asarray(link_mu_deriv(spec.link, etas))
        variances = np.asarray(variance_function(spec.family, mus))

        if estimate_corr:
            resids = [
                (c.outcomes - mu) / math.sqrt(v)
                for (c, _, _, _), mu, v in zip(stats, mus, variances)
            ]
            est = estimate_alpha_phi(resids, p, max_cluster_size=m_max)
            alpha, phi = est.alpha, est.phi
            clamped_any = clamped_any or est.clamped

        B = np.zeros((p, p))
        U = np.zeros(p)
        for (c, x, m, ysum), mu, d, v in zip(stats, mus, derivs, variances):
            denom = 1.0 + (m - 1) * alpha
            w = (d * d / v) * (m / denom)      # x' part of D'V^{-1}D
            B += w * np.outer(x, x)
            U += (d / v) * ((ysum - m * mu) / denom) * x

        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(U))):
            raise NonConvergenceError("numerical_breakdown", iterations, beta)
        try:
            delta = np.linalg.solve(B, U)
        except np.linalg.LinAlgError:
            raise NonConvergenceError("singular_information", iterations, beta) from None

        step = delta
        halvings = 0
        while not means_valid(beta + step):
            if halvings >= max_step_halvings:
                raise NonConvergenceError("step_halving_exhausted", iterations, beta)
            step = step / 2.0
            halvings += 1
        beta = beta + step
        if not np.all(np.isfinite(beta)):
            raise NonConvergenceError("numerical_breakdown", iterations, beta)
        if float(np.max(np.abs(step))) < beta_tol:
            converged = True
            break

    if not converged:
        raise NonConvergenceError("max_iterations", iterations, beta)

    # final pass at the converged beta: refresh (alpha, phi), build the
    # per-cluster caches, and verify the first-order condition
    etas, mus = cluster_means(beta)
    derivs = np.asarray(link_mu_deriv(spec.link, etas))
    variances = np.asarray(variance_function(spec.family, mus))
    resids = [
        (c.outcomes - mu) / math.sqrt(v)
        for (c, _, _, _), mu, v in zip(stats, mus, variances)
    ]
    if estimate_corr:
        est = estimate_alpha_phi(resids, p, max_cluster_size=m_max)
        alpha, phi = est.alpha, est.phi
        clamped_any = clamped_any or est.clamped
    else:
        est = estimate_alpha_phi(resids, p, max_cluster_size=m_max)
        phi = est.phi

    work = []
    B = np.zeros((p, p))
    U = np.zeros(p)
    for (c, x, m, ysum), mu, d, v in zip(stats, mus, derivs, variances):
        raw_resid = c.outcomes - mu
        denom = 1.0 + (m - 1) * alpha
        info = (d * d / v) * (m / denom) * np.outer(x, x)
        score = (d / v) * ((ysum - m * mu) / denom) * x
        work.append(
            ClusterWork(
                id=c.id,
                arm=c.arm,
                m=m,
                x=x,
                mu=float(mu),
                deriv=float(d),
                var=float(v),
                resid=raw_resid,
                a_sqrt=math.sqrt(v),
                D=d * np.outer(np.ones(m), x),
                info=info,
                score=score,
            )
        )
        B += info
        U += score

    score_norm = float(np.max(np.abs(U)))
    if score_norm >= score_tol:
        raise NonConvergenceError("score_condition_failed", iterations, beta)

    return GeeFit(
        data=data,
        spec=spec,
        corr=corr,
        beta=beta,
        alpha_hat=float(alpha),
        phi_hat=float(phi),
        converged=True,
        iterations=iterations,
        score_norm=score_norm,
        alpha_clamped=clamped_any,
        clusters=work,
        info_sum=B,
    )
