"""Point estimators for the deployment-side mean outcome.

Four estimators are provided:

* ``kmm_estimate`` — solve the mean-matching QP for weights, average the
  weighted training labels.
* ``plugin_estimate`` — fit the regression function by kernel ridge
  regression on the training sample, average its predictions over the
  test features.
* ``kde_ratio_estimate`` — naive baseline: estimate both feature
  densities with Gaussian KDEs and weight by their clipped ratio.
* ``oracle_estimate`` — weight by the true density ratio (synthetic
  scenarios only); the yardstick everything else is compared against.

Labels are stored internally in [0, 1].  Data outside that range must
arrive with an explicitly declared (min, max) range; rescaling from the
empirical extremes is refused because every downstream confidence bound
assumes the declared range, and a data-dependent range would invalidate
coverage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError
from .kernels import KernelSpec, cross_apply, _as_matrix
from .kmm import assemble_qp, solve_kmm, Weights

ESTIMATOR_KINDS = ("kmm", "plugin", "kde_ratio", "oracle")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional labels held in [0, 1].

    ``label_scale`` and ``label_offset`` map stored labels back to their
    original units: original = stored * scale + offset.
    """

    X: np.ndarray
    y: np.ndarray | None = None
    label_scale: float = 1.0
    label_offset: float = 0.0

    @classmethod
    def from_arrays(cls, X, y=None, label_range=None) -> "Dataset":
        X = _as_matrix(X)
        if y is None:
            return cls(X=X, y=None)
        y = np.asarray(y, dtype=float)
        if y.shape != (X.shape[0],):
            raise InputError(
                f"labels have shape {y.shape}, expected ({X.shape[0]},)"
            )
        if not np.all(np.isfinite(y)):
            raise InputError("non-finite labels")
        if label_range is None:
            if y.size and (y.min() < 0.0 or y.max() > 1.0):
                raise InputError(
                    f"labels span [{y.min():g}, {y.max():g}] but no label "
                    "range was declared; pass label_range=(min, max). "
                    "Auto-rescaling from empirical extremes is refused "
                    "because the bounds assume a fixed declared range."
                )
            return cls(X=X, y=y.copy())
        lo, hi = float(label_range[0]), float(label_range[1])
        if not (lo < hi):
            raise InputError("label_range must satisfy min < max")
        if y.size and (y.min() < lo or y.max() > hi):
            raise InputError(
                f"labels span [{y.min():g}, {y.max():g}], outside the "
                f"declared range [{lo:g}, {hi:g}]"
            )
        stored = (y - lo) / (hi - lo)
        return cls(X=X, y=stored, label_scale=hi - lo, label_offset=lo)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def labels_original(self) -> np.ndarray:
        if self.y is None:
            raise InputError("dataset has no labels")
        return self.y * self.label_scale + self.label_offset


@dataclass
class EstimateReport:
    """One estimator's output: the point estimate in original label
    units, the [0,1]-scale value the bounds apply to, and telemetry."""

    estimator_kind: str
    point: float
    point_unit_scale: float
    weights_summary: dict | None = None
    diagnostics: dict = field(default_factory=dict)
    beta: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "estimator_kind": self.estimator_kind,
            "point": self.point,
            "point_unit_scale": self.point_unit_scale,
            "weights_summary": self.weights_summary,
            "diagnostics": self.diagnostics,
        }


def kmm_estimate(
    train: Dataset,
    test_features,
    spec: KernelSpec,
    B: float,
    tol: float = 1e-8,
    max_iter: int | None = None,
    accelerate: bool = True,
    compute_objective: bool = True,
) -> EstimateReport:
    """Mean-matching weighted average of the training labels.

    Solver non-convergence is reported through
    ``weights_summary["converged"]``, not raised: the weights are still
    feasible and the estimate is still defined.
    """
    y = _require_labels(train)
    problem = assemble_qp(
        spec, train.X, test_features, B, compute_const=compute_objective
    )
    w = solve_kmm(problem, tol=tol, max_iter=max_iter, accelerate=accelerate)
    point_unit = float(w.beta @ y / train.n)
    return _finish_report("kmm", point_unit, train, _weights_summary(w), beta=w.beta)


def plugin_estimate(
    train: Dataset,
    test_features,
    spec: KernelSpec,
    lam: float | None = None,
) -> EstimateReport:
    """Fit the regression function by kernel ridge regression, then
    average its predictions over the test features.

    ``lam`` defaults to ``n_tr**(-2/3)``; tuning it optimally would
    require the unknown smoothness of the regression function, which is
    exactly the weakness this estimator is documented to have.
    """
    y = _require_labels(train)
    X_te = _as_matrix(test_features)
    n = train.n
    if lam is None:
        lam = float(n) ** (-2.0 / 3.0)
    if not (lam > 0):
        raise InputError("ridge parameter lam must be > 0")
    K = spec.gram(train.X, train.X)
    A = K + (n * lam) * np.eye(n)
    try:
        coef = scipy.linalg.solve(A, y, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(
            f"ridge system is singular despite regularization lam={lam:g} "
            f"(condition estimate {np.linalg.cond(A):.3e})"
        ) from exc
    if not np.all(np.isfinite(coef)):
        raise NumericalError(
            f"ridge solve produced non-finite coefficients at lam={lam:g}"
        )
    raw = float(np.mean(cross_apply(spec, X_te, train.X, coef)))
    # The estimand is a mean of [0,1] labels, so values outside [0,1]
    # can only be regression overshoot.
    point_unit = min(max(raw, 0.0), 1.0)
    report = _finish_report("plugin", point_unit, train, None)
    report.diagnostics.update({"lam": lam, "raw_mean_prediction": raw})
    return report


def kde_ratio_estimate(
    train: Dataset,
    test_features,
    B: float,
    bandwidth_tr: float | None = None,
    bandwidth_te: float | None = None,
) -> EstimateReport:
    """Naive density-ratio baseline.

    Gaussian KDEs for the training and test feature densities; the
    weight at a training point is the clipped ratio
    ``clip(p_te / max(p_tr, 1e-12), 0, B)``.  Bandwidths default to
    Silverman's rule computed per sample.
    """
    y = _require_labels(train)
    X_te = _as_matrix(test_features)
    if X_te.shape[1] != train.dim:
        raise InputError(
            f"feature-dimension mismatch: train {train.dim}, test {X_te.shape[1]}"
        )
    if not (B >= 1):
        raise InputError("B >= 1 is required for the weight cap")
    h_tr = silverman_bandwidth(train.X) if bandwidth_tr is None else float(bandwidth_tr)
    h_te = silverman_bandwidth(X_te) if bandwidth_te is None else float(bandwidth_te)
    if not (h_tr > 0 and h_te > 0):
        raise InputError("bandwidths must be positive")
    p_tr = _kde_density(train.X, train.X, h_tr)
    p_te = _kde_density(train.X, X_te, h_te)
    beta = np.clip(p_te / np.maximum(p_tr, 1e-12), 0.0, B)
    point_unit = float(beta @ y / train.n)
    summary = {
        "min": float(beta.min()),
        "max": float(beta.max()),
        "mean": float(beta.mean()),
        "lhat": None,
        "converged": True,
        "iterations": 0,
    }
    report = _finish_report("kde_ratio", point_unit, train, summary, beta=beta)
    report.diagnostics.update({"bandwidth_tr": h_tr, "bandwidth_te": h_te})
    return report


def oracle_estimate(train: Dataset, true_beta) -> EstimateReport:
    """Weighted average using the true density ratio at the training
    points; available only when the generating process is known."""
    y = _require_labels(train)
    beta = np.asarray(true_beta, dtype=float)
    if beta.shape != (train.n,):
        raise InputError(
            f"true_beta has shape {beta.shape}, expected ({train.n},)"
        )
    if not np.all(np.isfinite(beta)) or beta.min() < 0:
        raise InputError("true_beta must be finite and nonnegative")
    point_unit = float(beta @ y / train.n)
    summary = {
        "min": float(beta.min()),
        "max": float(beta.max()),
        "mean": float(beta.mean()),
        "lhat": None,
        "converged": True,
        "iterations": 0,
    }
    return _finish_report("oracle", point_unit, train, summary, beta=beta)


@dataclass
class RankingResult:
    """Classifiers ordered by estimated deployment risk, ascending."""

    entries: list
    weights_summary: dict

    def to_dict(self) -> dict:
        return {"ranking": self.entries, "weights_summary": self.weights_summary}


def rank_classifiers(
    train_features,
    loss_matrix,
    test_features,
    spec: KernelSpec,
    B: float,
    loss_range=None,
    tol: float = 1e-8,
    max_iter: int | None = None,
) -> RankingResult:
    """Rank classifiers by reweighted average loss.

    The weights depend only on the covariates, so one QP solve serves
    every loss column.  Ties are broken by column index.
    """
    X_tr = _as_matrix(train_features)
    Z = np.asarray(loss_matrix, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2 or Z.shape[0] != X_tr.shape[0]:
        raise InputError(
            f"loss matrix has shape {Z.shape}, expected ({X_tr.shape[0]}, N)"
        )
    if not np.all(np.isfinite(Z)):
        raise InputError("non-finite loss values")
    scale, offset = 1.0, 0.0
    if loss_range is not None:
        lo, hi = float(loss_range[0]), float(loss_range[1])
        if not (lo < hi):
            raise InputError("loss_range must satisfy min < max")
        if Z.min() < lo or Z.max() > hi:
            raise InputError(
                f"loss values span [{Z.min():g}, {Z.max():g}], outside the "
                f"declared range [{lo:g}, {hi:g}]"
            )
        Z = (Z - lo) / (hi - lo)
        scale, offset = hi - lo, lo
    elif Z.size and (Z.min() < 0.0 or Z.max() > 1.0):
        raise InputError(
            f"loss values span [{Z.min():g}, {Z.max():g}] but no loss range "
            "was declared; pass loss_range=(min, max)"
        )
    problem = assemble_qp(spec, X_tr, test_features, B)
    w = solve_kmm(problem, tol=tol, max_iter=max_iter)
    estimates_unit = (w.beta @ Z) / X_tr.shape[0]
    order = np.lexsort((np.arange(Z.shape[1]), estimates_unit))
    entries = [
        {
            "rank": r + 1,
            "classifier_index": int(j),
            "risk_estimate": float(estimates_unit[j] * scale + offset),
            "risk_estimate_unit_scale": float(estimates_unit[j]),
            "weights_shared": True,
        }
        for r, j in enumerate(order)
    ]
    return RankingResult(entries=entries, weights_summary=_weights_summary(w))


def silverman_bandwidth(X) -> float:
    """Isotropic Silverman bandwidth: ``sigma * (4/(d+2))^(1/(d+4)) *
    n^(-1/(d+4))`` with sigma the root-mean per-dimension std."""
    X = _as_matrix(X)
    n, d = X.shape
    sigma = float(np.sqrt(np.mean(np.var(X, axis=0, ddof=1)))) if n > 1 else 1.0
    if sigma == 0.0:
        sigma = 1.0
    return sigma * (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))


def _kde_density(query, sample, h: float) -> np.ndarray:
    """Gaussian KDE of ``sample`` evaluated at ``query`` rows."""
    sample = _as_matrix(sample)
    n, d = sample.shape
    # our Gaussian kernel is exp(-dist^2/sigma^2); the KDE kernel needs
    # exp(-dist^2/(2h^2)), i.e. sigma = h*sqrt(2)
    spec = KernelSpec.gaussian(h * np.sqrt(2.0))
    norm = n * (np.sqrt(2.0 * np.pi) * h) ** d
    return cross_apply(spec, query, sample) / norm


def _weights_summary(w: Weights) -> dict:
    return {
        "min": float(w.beta.min()),
        "max": float(w.beta.max()),
        "mean": float(w.beta.mean()),
        "lhat": None if w.objective_value is None else float(w.objective_value),
        "converged": bool(w.converged),
        "iterations": int(w.iterations),
    }


def _finish_report(
    kind: str,
    point_unit: float,
    train: Dataset,
    weights_summary: dict | None,
    beta: np.ndarray | None = None,
) -> EstimateReport:
    point = point_unit * train.label_scale + train.label_offset
    return EstimateReport(
        estimator_kind=kind,
        point=point,
        point_unit_scale=point_unit,
        weights_summary=weights_summary,
        beta=beta,
    )


def _require_labels(train: Dataset) -> np.ndarray:
    if train.y is None:
        raise InputError("this estimator needs a labelled training sample")
    return train.y
