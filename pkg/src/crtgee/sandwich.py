"""Model-based, robust, and bias-corrected sandwich covariance estimators.

All corrections act in score space as p x p multipliers C_i applied to the
per-cluster score s_i = D_i' V_i^{-1} (y_i - mu_i):

    cov = B^{-1} [ sum_i (C_i s_i)(C_i s_i)' ] B^{-1},   B = sum_i D_i' V_i^{-1} D_i

with C_i = I (robust), (I - Q_i)^{-1/2} (KC), (I - Q_i)^{-1} (MD), or the
diagonal cap rule (FG), where Q_i = (D_i' V_i^{-1} D_i) B^{-1}. The MBN
estimator adds an inflation term to the robust matrix instead. Internal
sums are kept unnormalized; the N-normalized textbook writing differs only
by cancelling factors of N.

Q_i is not symmetric in general, but B^{-1/2} Q_i B^{1/2} always is (it is
PSD with eigenvalues in [0, 1], and the transformed factors sum to I), so
the KC and MD multipliers are evaluated as true matrix functions of Q_i
through that similarity. This keeps (I - Q_i)^{-1/2} real and principal,
reduces to plain symmetric eigendecomposition whenever Q_i is symmetric,
and preserves the diagonal ordering robust <= KC <= MD whenever every
Q_i eigenvalue is below 1. It also coincides exactly with the classical
observation-space leverage form D'V^{-1}(I - H_i)^{-1/2}(y - mu), since
D'V^{-1} f(H_i) = f(Q_i) D'V^{-1} for any power series f.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorrectionSingularityError,
    SingularityError,
    UnsupportedDesignError,
    UsageError,
)


class EstimatorKind(enum.Enum):
    MB = "mb"
    ROBUST = "robust"
    KC = "kc"
    MD = "md"
    FG = "fg"
    MBN = "mbn"
    AVG = "avg"


#: kinds computed through the common sandwich path
MULTIPLICATIVE_KINDS = (EstimatorKind.ROBUST, EstimatorKind.KC, EstimatorKind.MD, EstimatorKind.FG)

ALL_KINDS = tuple(EstimatorKind)

DEFAULT_FG_BOUND = 0.75


@dataclass
class VarianceEstimate:
    """One p x p coefficient covariance matrix, tagged by estimator kind."""

    kind: EstimatorKind
    cov: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def se(self, j=-1):
        """Standard error of coefficient j (default: the arm effect)."""
        return float(np.sqrt(self.cov[j, j]))


@dataclass
class ClusterCorrection:
    """Eigendecomposition of one cluster's Q_i in the B^{-1/2} similarity.

    Matrix functions of Q_i evaluate as lift @ diag(f(vals)) @ drop; `diag`
    is the diagonal of the untransformed Q_i, which is what FG caps.
    """

    vals: np.ndarray        # eigenvalues of Q_i (real, in [0, 1])
    lift: np.ndarray        # B^{1/2} @ eigenvectors
    drop: np.ndarray        # eigenvectors' @ B^{-1/2}
    diag: np.ndarray        # diag(Q_i)


@dataclass
class CorrectionContext:
    """Per-cluster leverage-style factors Q_i shared by the corrections."""

    q: list                 # p x p matrices Q_i = B_i B^{-1}, dataset order
    cells: list             # ClusterCorrection, dataset order
    r: float                # FG diagonal cap
    q_max: float            # largest eigenvalue of any Q_i

    def identity_gap(self):
        """sum_i Q_i - I, an algebraic zero up to rounding."""
        total = sum(self.q)
        return total - np.eye(total.shape[0])


def _bread_inverse(fit):
    B = fit.info_sum
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        raise SingularityError("bread matrix sum_i D'V^{-1}D is singular") from None
    if not np.all(np.isfinite(Binv)):
        raise SingularityError("bread matrix inverse is not finite")
    return Binv


def correction_context(fit, fg_bound=DEFAULT_FG_BOUND):
    """Build the Q_i factors from a converged fit."""
    if not 0.0 < fg_bound <= 1.0:
        raise UsageError(f"FG bound must lie in (0, 1], got {fg_bound}")
    Binv = _bread_inverse(fit)
    b_vals, b_vecs = np.linalg.eigh(fit.info_sum)
    if np.any(b_vals <= 0.0):
        raise SingularityError("bread matrix sum_i D'V^{-1}D is not positive definite")
    b_half = (b_vecs * np.sqrt(b_vals)) @ b_vecs.T
    b_half_inv = (b_vecs / np.sqrt(b_vals)) @ b_vecs.T

    q = []
    cells = []
    q_max = 0.0
    for w in fit.clusters:
        Qi = w.info @ Binv
        tilde = b_half_inv @ w.info @ b_half_inv
        vals, vecs = np.linalg.eigh((tilde + tilde.T) / 2.0)
        q.append(Qi)
        cells.append(
            ClusterCorrection(
                vals=vals,
                lift=b_half @ vecs,
                drop=vecs.T @ b_half_inv,
                diag=np.diag(Qi).copy(),
            )
        )
        q_max = max(q_max, float(vals[-1]))
    return CorrectionContext(q=q, cells=cells, r=fg_bound, q_max=q_max)


def _corrected_score(kind, w, cell, r):
    """Apply the kind's multiplier C_i to the cluster score."""
    if kind is EstimatorKind.ROBUST:
        return w.score
    if kind in (EstimatorKind.KC, EstimatorKind.MD):
        gaps = 1.0 - cell.vals                         # eigenvalues of I - Q_i
        if np.any(gaps <= 1e-14):
            raise CorrectionSingularityError(
                w.id, kind.name, f"I - Q_i eigenvalue {float(gaps.min()):.3g}"
            )
        power = -0.5 if kind is EstimatorKind.KC else -1.0
        return cell.lift @ (gaps ** power * (cell.drop @ w.score))
    if kind is EstimatorKind.FG:
        factors = 1.0 - np.minimum(r, cell.diag)
        if np.any(factors <= 0.0):
            raise CorrectionSingularityError(w.id, "FG", "capped diagonal reached 1")
        return w.score / np.sqrt(factors)
    raise UsageError(f"{kind} is not a sandwich-multiplier kind")


def robust_sandwich(fit, kinds=(EstimatorKind.ROBUST,), fg_bound=DEFAULT_FG_BOUND):
    """Sandwich estimates for the requested multiplicative kinds.

    Returns a list of VarianceEstimate in the order requested. Every
    output is exactly symmetrized as (A + A')/2.
    """
    kinds = tuple(kinds)
    bad = [k for k in kinds if k not in MULTIPLICATIVE_KINDS]
    if bad:
        raise UsageError(f"robust_sandwich handles {MULTIPLICATIVE_KINDS}, got {bad}")
    Binv = _bread_inverse(fit)
    ctx = correction_context(fit, fg_bound)

    out = []
    for kind in kinds:
        meat = np.zeros_like(Binv)
        for w, cell in zip(fit.clusters, ctx.cells):
            t = _corrected_score(kind, w, cell, ctx.r)
            meat += np.outer(t, t)
        cov = Binv @ meat @ Binv
        cov = (cov + cov.T) / 2.0
        out.append(VarianceEstimate(kind=kind, cov=cov, diagnostics={"q_max": ctx.q_max}))
    return out


def model_based(fit):
    """Working-model covariance phi * B^{-1}."""
    Binv = _bread_inverse(fit)
    cov = fit.phi_hat * Binv
    return VarianceEstimate(kind=EstimatorKind.MB, cov=(cov + cov.T) / 2.0)


def mbn(fit):
    """Additive-inflation correction of the robust sandwich.

    cov = c * V_robust + delta_N * phi_mbn * B^{-1}, with
    c = ((sum m_i - 1)/(sum m_i - 2)) * (N/(N-1)),
    delta_N = min(0.5, 2/(N-2)), and
    phi_mbn = max(1, trace(c B^{-1} sum_i s_i s_i') / p).
    """
    N = fit.n_clusters
    if N <= 2:
        raise UnsupportedDesignError(f"MBN needs more than 2 clusters, got {N}")
    total_obs = sum(w.m for w in fit.clusters)
    c = ((total_obs - 1) / (total_obs - 2)) * (N / (N - 1))
    delta = min(0.5, 2.0 / (N - 2))

    Binv = _bread_inverse(fit)
    meat = np.zeros_like(Binv)
    for w in fit.clusters:
        meat += np.outer(w.score, w.score)
    v_robust = Binv @ meat @ Binv
    p = fit.n_params
    phi_mbn = max(1.0, float(np.trace(c * (Binv @ meat))) / p)

    cov = c * v_robust + delta * phi_mbn * Binv
    cov = (cov + cov.T) / 2.0
    return VarianceEstimate(kind=EstimatorKind.MBN, cov=cov, diagnostics={"mbn_phi": phi_mbn})


def avg(kc, md):
    """Elementwise average of the KC and MD estimates."""
    if kc.kind is not EstimatorKind.KC or md.kind is not EstimatorKind.MD:
        raise UsageError(f"avg expects (KC, MD) estimates, got ({kc.kind}, {md.kind})")
    if kc.cov.shape != md.cov.shape:
        raise UsageError("KC and MD estimates have mismatched shapes")
    cov = (kc.cov + md.cov) / 2.0
    diag = {"q_max": kc.diagnostics.get("q_max")}
    return VarianceEstimate(kind=EstimatorKind.AVG, cov=cov, diagnostics=diag)


def compute_estimates(fit, kinds=ALL_KINDS, fg_bound=DEFAULT_FG_BOUND):
    """All requested estimates keyed by kind; AVG implies KC and MD."""
    kinds = tuple(kinds)
    want = set(kinds)
    sandwich_kinds = [k for k in MULTIPLICATIVE_KINDS if k in want]
    if EstimatorKind.AVG in want:
        for k in (EstimatorKind.KC, EstimatorKind.MD):
            if k not in sandwich_kinds:
                sandwich_kinds.append(k)

    got = {}
    if sandwich_kinds:
        for est in robust_sandwich(fit, sandwich_kinds, fg_bound):
            got[est.kind] = est
    if EstimatorKind.MB in want:
        got[EstimatorKind.MB] = model_based(fit)
    if EstimatorKind.MBN in want:
        got[EstimatorKind.MBN] = mbn(fit)
    if EstimatorKind.AVG in want:
        got[EstimatorKind.AVG] = avg(got[EstimatorKind.KC], got[EstimatorKind.MD])

    return {k: got[k] for k in kinds}
