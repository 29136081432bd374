"""Wald t-inference for the arm effect on link and effect-measure scales."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DegenerateVarianceError, UsageError
from .families import Link, MeanModel
from .tdist import student_t_quantile, student_t_two_sided_p


class EffectMeasure(enum.Enum):
    RR = "rr"   # risk ratio, log link
    RD = "rd"   # risk difference, identity link
    OR = "or"   # odds ratio, logit link


_MEASURE_FOR_LINK = {
    Link.LOG: EffectMeasure.RR,
    Link.IDENTITY: EffectMeasure.RD,
    Link.LOGIT: EffectMeasure.OR,
}


def default_measure(link):
    """The effect measure the link estimates."""
    return _MEASURE_FOR_LINK[link]


@dataclass
class InferenceResult:
    effect_measure: EffectMeasure
    estimate_link: float        # arm coefficient on the link scale
    estimate_effect: float      # RR/OR: exp(beta1); RD: beta1
    se: float
    df: int
    t_stat: float
    p_value: float
    ci_link: tuple
    ci_effect: tuple
    alpha_level: float
    estimator_kind: object = None

    @property
    def reject(self):
        return self.p_value < self.alpha_level


def wald_inference(fit, var, measure=None, alpha_level=0.05):
    """Wald t-test and CI for the arm effect using one variance estimate.

    Degrees of freedom are N - p for N clusters and p mean parameters.
    The effect-scale interval exponentiates the link-scale interval for
    log and logit links and is the identity for the identity link.
    """
    if fit.spec.mean_model is not MeanModel.INTERCEPT_PLUS_ARM:
        raise UsageError("arm-effect inference needs the intercept + arm mean model")
    link_measure = default_measure(fit.spec.link)
    if measure is None:
        measure = link_measure
    elif measure is not link_measure:
        raise UsageError(
            f"measure {measure.value} inconsistent with link {fit.spec.link.value} "
            f"(expected {link_measure.value})"
        )
    if not 0.0 < alpha_level < 1.0:
        raise UsageError(f"alpha_level must lie in (0, 1), got {alpha_level}")

    cov11 = float(var.cov[1, 1])
    if not cov11 > 0.0:
        raise DegenerateVarianceError(
            f"arm-effect variance is {cov11}; Wald inference undefined"
        )
    se = math.sqrt(cov11)
    beta1 = float(fit.beta[1])
    df = fit.n_clusters - fit.n_params

    t_stat = beta1 / se
    p_value = student_t_two_sided_p(t_stat, df)
    t_crit = student_t_quantile(alpha_level / 2.0, df)
    lo = beta1 - t_crit * se
    hi = beta1 + t_crit * se

    if fit.spec.link is Link.IDENTITY:
        estimate_effect = beta1
        ci_effect = (lo, hi)
    else:
        estimate_effect = math.exp(beta1)
        ci_effect = (math.exp(lo), math.exp(hi))

    return InferenceResult(
        effect_measure=measure,
        estimate_link=beta1,
        estimate_effect=estimate_effect,
        se=se,
        df=df,
        t_stat=t_stat,
        p_value=p_value,
        ci_link=(lo, hi),
        ci_effect=ci_effect,
        alpha_level=alpha_level,
        estimator_kind=var.kind,
    )
