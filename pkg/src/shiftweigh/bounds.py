"""Closed-form finite-sample confidence bounds for the weighted estimate.

Every bound takes the same primitive inputs: the weight cap ``B``, the
kernel sup constant ``C``, the confidence level ``delta`` and the two
sample sizes.  What differs is the regularity regime assumed for the
regression function:

* ``InRkhs(norm_m)`` — the regression function lives in the kernel's
  RKHS with known norm; parametric rate.
* ``PolyApprox(c2, theta)`` — its RKHS approximation error in the
  training L2 norm decays like ``c2 * R^(-theta/2)`` with ball radius R.
* ``LogApprox(c_inf, s)`` — sup-norm approximation error decays only
  logarithmically, ``c_inf * (log R)^(-s)``.
* ``PluginPoly(c1, theta)`` — regime for the plug-in (fit-then-average)
  estimator, with an unidentified leading constant ``c1``.

All regime constants are caller-supplied, never estimated from data: the
RKHS norm and the approximation constants are not identifiable from
samples, and pretending otherwise would invalidate coverage guarantees.

Each result reports the additive pieces of the bound (summing exactly to
the total), any intermediate constants, and the polynomial rate
exponents in the two sample sizes so that empirical slope checks need
not re-derive them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log, sqrt

from .errors import DomainError, InputError


@dataclass(frozen=True)
class InRkhs:
    """Regression function inside the RKHS, with its norm."""
    norm_m: float

    def __post_init__(self):
        if not (self.norm_m >= 0):
            raise InputError("norm_m must be >= 0")


@dataclass(frozen=True)
class PolyApprox:
    """Polynomially decaying L2 approximation error: c2 * R^(-theta/2)."""
    c2: float
    theta: float

    def __post_init__(self):
        if not (self.c2 >= 0):
            raise InputError("c2 must be >= 0")
        if not (self.theta > 0):
            raise InputError("theta must be > 0")


@dataclass(frozen=True)
class LogApprox:
    """Logarithmically decaying sup-norm approximation error:
    c_inf * (log R)^(-s)."""
    c_inf: float
    s: float

    def __post_init__(self):
        if not (self.c_inf >= 0):
            raise InputError("c_inf must be >= 0")
        if not (self.s > 0):
            raise InputError("s must be > 0")


@dataclass(frozen=True)
class PluginPoly:
    """Plug-in estimator regime with unidentified constant c1."""
    c1: float
    theta: float

    def __post_init__(self):
        if not (self.c1 >= 0):
            raise InputError("c1 must be >= 0")
        if not (self.theta > 0):
            raise InputError("theta must be > 0")


Regime = InRkhs | PolyApprox | LogApprox | PluginPoly


@dataclass(frozen=True)
class BoundInputs:
    """Shared inputs of every confidence bound."""

    B: float
    C: float
    delta: float
    n_tr: int
    n_te: int
    regime: Regime

    def __post_init__(self):
        if not (self.B >= 1):
            raise InputError(
                "B >= 1 is required: the density ratio averages to one under "
                "the training distribution, so its supremum cannot be below one"
            )
        if not (self.C > 0):
            raise InputError("kernel sup constant C must be > 0")
        if not (0.0 < self.delta < 1.0):
            raise InputError("delta must lie strictly inside (0, 1)")
        if int(self.n_tr) != self.n_tr or self.n_tr < 1:
            raise InputError("n_tr must be a positive integer")
        if int(self.n_te) != self.n_te or self.n_te < 1:
            raise InputError("n_te must be a positive integer")


@dataclass(frozen=True)
class BoundValue:
    """A bound total, its additive pieces, and rate metadata.

    ``terms`` always sums to ``total``.  ``constants`` holds intermediate
    quantities that are not additive pieces (e.g. the combined deviation
    scale of the approximation term).  Rate exponents are signed: -0.5
    means the piece shrinks like n^(-1/2); 0.0 means slower than any
    polynomial (see ``rate_label``).
    """

    total: float
    terms: dict[str, float]
    rate_exponent_tr: float
    rate_exponent_te: float
    rate_label: str
    constants: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "terms": dict(self.terms),
            "constants": dict(self.constants),
            "rate_exponent_tr": self.rate_exponent_tr,
            "rate_exponent_te": self.rate_exponent_te,
            "rate_label": self.rate_label,
        }


def hoeffding_term(B: float, n_tr: int, delta: float) -> float:
    """Deviation of a [0, B]-weighted bounded-label average:
    ``B * sqrt(log(2/delta) / (2 n_tr))``."""
    _check_scalar(B, n_tr, delta, allow_zero_B=True)
    return B * sqrt(log(2.0 / delta) / (2.0 * n_tr))


def emp_discrepancy_bound(
    B: float, C: float, n_tr: int, n_te: int, delta: float
) -> float:
    """High-probability cap on the achievable kernel-mean matching norm:
    ``C * sqrt(2 (B^2/n_tr + 1/n_te) log(2/delta))``."""
    _check_scalar(B, n_tr, delta)
    if not (C > 0):
        raise InputError("kernel sup constant C must be > 0")
    if int(n_te) != n_te or n_te < 1:
        raise InputError("n_te must be a positive integer")
    return C * sqrt(2.0 * (B * B / n_tr + 1.0 / n_te) * log(2.0 / delta))


def bound_in_rkhs(inputs: BoundInputs) -> BoundValue:
    """Error bound when the regression function lies in the RKHS.

    total = (1 + 2 C ||m||) * sqrt(2 (B^2/n_tr + 1/n_te) log(6/delta)).
    """
    r = _expect_regime(inputs, InRkhs)
    big_m = 1.0 + 2.0 * inputs.C * r.norm_m
    dev = sqrt(
        2.0 * (inputs.B ** 2 / inputs.n_tr + 1.0 / inputs.n_te)
        * log(6.0 / inputs.delta)
    )
    total = big_m * dev
    return BoundValue(
        total=total,
        terms={"weighted_deviation": total},
        constants={"M": big_m},
        rate_exponent_tr=-0.5,
        rate_exponent_te=-0.5,
        rate_label="O(n_tr^-1/2 + n_te^-1/2)",
    )


def bound_poly_decay(inputs: BoundInputs) -> BoundValue:
    """Error bound under polynomially decaying approximation error.

    total = B sqrt((9/(2 n_tr)) log(8/delta))
            + C_theta (B c2)^(2/(theta+2)) D2^(theta/(theta+2))
    with D2 = 2C sqrt(2 (B^2/n_tr + 1/n_te) log(8/delta))
              + B C sqrt(log(8/delta) / (2 n_tr))
    and C_theta = (1 + 2/theta) (theta/2)^(2/(theta+2)).
    """
    r = _expect_regime(inputs, PolyApprox)
    B, C, delta = inputs.B, inputs.C, inputs.delta
    n, m = inputs.n_tr, inputs.n_te
    theta = r.theta
    loge = log(8.0 / delta)
    d2 = 2.0 * C * sqrt(2.0 * (B * B / n + 1.0 / m) * loge) + B * C * sqrt(
        loge / (2.0 * n)
    )
    c_theta = (1.0 + 2.0 / theta) * (theta / 2.0) ** (2.0 / (theta + 2.0))
    noise = B * sqrt(9.0 / (2.0 * n) * loge)
    approx = c_theta * (B * r.c2) ** (2.0 / (theta + 2.0)) * d2 ** (
        theta / (theta + 2.0)
    )
    expo = -theta / (2.0 * (theta + 2.0))
    return BoundValue(
        total=noise + approx,
        terms={"label_noise": noise, "approximation": approx},
        constants={"D2": d2, "C_theta": c_theta},
        rate_exponent_tr=expo,
        rate_exponent_te=expo,
        rate_label="O(n_tr^-t + n_te^-t), t = theta/(2(theta+2))",
    )


def bound_log_decay(inputs: BoundInputs) -> BoundValue:
    """Error bound under logarithmically decaying approximation error.

    total = (1 + 1/s)^s B c_inf (log(s B c_inf / D_inf))^(-s)
            + B sqrt((2/n_tr) log(6/delta))
            + (s B c_inf)^(s/(s+1)) D_inf^(1/(s+1))
    with D_inf = 2C sqrt(2 (B^2/n_tr + 1/n_te) log(6/delta)).

    Requires ``s B c_inf / D_inf > 1`` (the approximation ball radius
    must be at least one); raise DomainError otherwise — increase the
    sample sizes.
    """
    r = _expect_regime(inputs, LogApprox)
    B, C, delta = inputs.B, inputs.C, inputs.delta
    n, m = inputs.n_tr, inputs.n_te
    s = r.s
    loge = log(6.0 / delta)
    d_inf = 2.0 * C * sqrt(2.0 * (B * B / n + 1.0 / m) * loge)
    log_argument = s * B * r.c_inf / d_inf
    if not (log_argument > 1.0):
        raise DomainError(
            f"log argument s*B*c_inf/D_inf = {log_argument:.6g} must exceed 1 "
            "for this bound to apply; increase n_tr and n_te (or c_inf is too "
            "small for a meaningful approximation radius)"
        )
    approx = (1.0 + 1.0 / s) ** s * B * r.c_inf * log(log_argument) ** (-s)
    noise = B * sqrt(2.0 / n * loge)
    matching = (s * B * r.c_inf) ** (s / (s + 1.0)) * d_inf ** (1.0 / (s + 1.0))
    return BoundValue(
        total=approx + noise + matching,
        terms={
            "approximation": approx,
            "label_noise": noise,
            "mean_matching": matching,
        },
        constants={"D_inf": d_inf, "log_argument": log_argument},
        rate_exponent_tr=0.0,
        rate_exponent_te=0.0,
        rate_label="O(log^-s(n_tr*n_te/(n_tr+n_te)))",
    )


def bound_plugin_poly(inputs: BoundInputs) -> BoundValue:
    """Error bound for the fit-then-average (plug-in) estimator.

    total = sqrt(log(4/delta) / (2 n_te)) + sqrt(B) c1 n_tr^(-3 theta/(12 theta + 16)).
    """
    r = _expect_regime(inputs, PluginPoly)
    test_term = sqrt(log(4.0 / inputs.delta) / (2.0 * inputs.n_te))
    expo_tr = -3.0 * r.theta / (12.0 * r.theta + 16.0)
    train_term = sqrt(inputs.B) * r.c1 * inputs.n_tr ** expo_tr
    return BoundValue(
        total=test_term + train_term,
        terms={"test_sampling": test_term, "regression_fit": train_term},
        constants={},
        rate_exponent_tr=expo_tr,
        rate_exponent_te=-0.5,
        rate_label="O(n_te^-1/2 + n_tr^-3theta/(12theta+16))",
    )


def evaluate_bound(inputs: BoundInputs) -> BoundValue:
    """Dispatch to the bound matching ``inputs.regime``."""
    if isinstance(inputs.regime, InRkhs):
        return bound_in_rkhs(inputs)
    if isinstance(inputs.regime, PolyApprox):
        return bound_poly_decay(inputs)
    if isinstance(inputs.regime, LogApprox):
        return bound_log_decay(inputs)
    if isinstance(inputs.regime, PluginPoly):
        return bound_plugin_poly(inputs)
    raise InputError(f"unknown regime {type(inputs.regime).__name__}")


def rate_exponent_kmm(theta: float) -> float:
    """Magnitude of the weighted estimator's rate exponent,
    theta / (2 (theta + 2)); approaches 1/2 as theta grows."""
    if not (theta > 0):
        raise InputError("theta must be > 0")
    return theta / (2.0 * (theta + 2.0))


def rate_exponent_plugin(theta: float) -> float:
    """Magnitude of the plug-in estimator's training-size rate exponent,
    3 theta / (12 theta + 16); approaches 1/4 as theta grows."""
    if not (theta > 0):
        raise InputError("theta must be > 0")
    return 3.0 * theta / (12.0 * theta + 16.0)


def _expect_regime(inputs: BoundInputs, kind: type):
    if not isinstance(inputs.regime, kind):
        raise InputError(
            f"this bound needs a {kind.__name__} regime, got "
            f"{type(inputs.regime).__name__}"
        )
    return inputs.regime


def _check_scalar(B: float, n_tr: int, delta: float, allow_zero_B: bool = False):
    low = 0.0 if allow_zero_B else 1.0
    if not (B >= low):
        raise InputError(f"B must be >= {low:g}")
    if int(n_tr) != n_tr or n_tr < 1:
        raise InputError("n_tr must be a positive integer")
    if not (0.0 < delta < 1.0):
        raise InputError("delta must lie strictly inside (0, 1)")
