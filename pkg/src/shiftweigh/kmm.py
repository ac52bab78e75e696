"""Box-constrained quadratic program for kernel mean matching.

The weights minimize the RKHS distance between the weighted training
kernel mean and the unweighted test kernel mean, subject to
``0 <= beta_i <= B``.  Expanding the squared norm through kernel inner
products gives a finite-dimensional quadratic

    f(beta) = beta' Q beta + q' beta + const

with ``Q = K_tr / n_tr^2``, ``q_i = -(2 / (n_tr n_te)) sum_j k(x_i^tr,
x_j^te)`` and ``const = (1 / n_te^2) 1' K_te 1``.  The solver is
projected gradient descent with optional Nesterov-style acceleration;
the box projection is a componentwise clip, so every iterate is
exactly feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .kernels import KernelSpec, cross_apply, pair_sum, _as_matrix

# Squared objectives below this magnitude are treated as exact zeros
# when converting to the norm scale.
CLAMP_TOL = 1e-10


@dataclass
class QpProblem:
    """Quadratic expansion of the squared matching objective.

    ``const_term`` is None when assembly skipped the test-block constant
    (it does not affect the minimizer, only the reported norm).
    """

    Q: np.ndarray
    q: np.ndarray
    const_term: float | None
    box_upper: float

    @property
    def n_tr(self) -> int:
        return self.q.shape[0]

    def objective(self, beta: np.ndarray) -> float:
        """Squared matching norm at ``beta`` (requires const_term)."""
        if self.const_term is None:
            raise InputError(
                "this problem was assembled without the test-block constant; "
                "only the minimizer is available, not objective values"
            )
        beta = self._check_beta(beta)
        return float(beta @ (self.Q @ beta) + self.q @ beta + self.const_term)

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        beta = self._check_beta(beta)
        return 2.0 * (self.Q @ beta) + self.q

    def _check_beta(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.n_tr,):
            raise InputError(
                f"weight vector has length {beta.shape}, expected ({self.n_tr},)"
            )
        return beta


@dataclass
class Weights:
    """Solved weights plus solver telemetry.

    ``objective_value`` is the achieved matching norm (not its square),
    or None when the problem was assembled without the constant term.
    """

    beta: np.ndarray
    box_upper: float
    objective_value: float | None
    iterations: int
    converged: bool
    residual: float
    objective_history: np.ndarray | None = None


def assemble_qp(
    spec: KernelSpec,
    X_tr,
    X_te,
    B: float,
    compute_const: bool = True,
) -> QpProblem:
    """Build the box QP from raw samples.

    ``compute_const=False`` skips the quadratic-in-``n_te`` test-block
    constant; the minimizer is unchanged but no norm value can be
    reported afterwards.
    """
    X_tr = _as_matrix(X_tr)
    X_te = _as_matrix(X_te)
    if X_tr.shape[1] != X_te.shape[1]:
        raise InputError(
            f"feature-dimension mismatch: train has {X_tr.shape[1]} columns, "
            f"test has {X_te.shape[1]}"
        )
    B = float(B)
    if not np.isfinite(B) or B < 1.0:
        raise InputError(
            "B >= 1 is required: the density ratio averages to one under the "
            "training distribution, so its supremum cannot be below one"
        )
    n_tr, n_te = X_tr.shape[0], X_te.shape[0]
    Q = spec.gram(X_tr, X_tr) / float(n_tr) ** 2
    q = cross_apply(spec, X_tr, X_te) * (-2.0 / (n_tr * n_te))
    const = pair_sum(spec, X_te) / float(n_te) ** 2 if compute_const else None
    return QpProblem(Q=Q, q=q, const_term=const, box_upper=B)


def objective_norm(problem: QpProblem, beta) -> float:
    """Matching norm ``sqrt(max(f(beta), 0))``.

    The squared objective is clamped at zero; anything beyond -1e-10
    below zero indicates an inconsistent problem and raises.
    """
    val = problem.objective(beta)
    if val < -CLAMP_TOL:
        raise NumericalError(
            f"squared objective {val:.3e} is negative beyond tolerance; "
            "the quadratic term is not consistent with the constant term"
        )
    return float(np.sqrt(max(val, 0.0)))


def solve_kmm(
    problem: QpProblem,
    tol: float = 1e-8,
    max_iter: int | None = None,
    accelerate: bool = True,
    record_objective: bool = False,
) -> Weights:
    """Minimize the box QP by projected gradient descent.

    Stops when the fixed-point residual ``||beta - clip(beta - grad, 0, B)||_inf``
    falls to ``tol``.  With ``accelerate=True`` a Nesterov momentum
    sequence is used, restarted whenever the objective would increase,
    so the reported objective trace is non-increasing either way.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    Q, q, B = problem.Q, problem.q, problem.box_upper
    n = problem.n_tr
    if max_iter is None:
        max_iter = 50 * n + 10_000
    if max_iter < 1:
        raise InputError("max_iter must be at least 1")
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(q))):
        raise InputError("non-finite entries in the quadratic problem")
    if Q.shape != (n, n):
        raise InputError(f"Q has shape {Q.shape}, expected ({n}, {n})")

    # Step 1 / lam_max(2Q) with a 5% margin keeps plain descent and the
    # accelerated variant stable; lam_max from power iteration.
    lam_max = _power_lambda_max(Q, rel_tol=1e-6)
    Q, lam_max = _ensure_near_psd(Q, n, lam_max)
    lip = 2.0 * lam_max * 1.05
    if lip <= 0:
        # Q is (numerically) zero: the objective is linear and the box
        # minimizer is a corner determined by the sign of q.
        beta = np.where(q > 0, 0.0, B)
        obj = _norm_or_none(problem, beta)
        return Weights(
            beta=beta, box_upper=B, objective_value=obj, iterations=0,
            converged=True, residual=0.0,
        )
    step = 1.0 / lip

    def smooth_val(b):
        return float(b @ (Q @ b) + q @ b)

    beta = np.clip(np.ones(n), 0.0, B)
    f_beta = smooth_val(beta)
    momentum = beta.copy()
    t_acc = 1.0
    history = [f_beta] if record_objective else None
    residual = np.inf
    converged = False
    it = 0
    check_every = 10
    for it in range(1, max_iter + 1):
        point = momentum if accelerate else beta
        grad = 2.0 * (Q @ point) + q
        candidate = np.clip(point - step * grad, 0.0, B)
        f_cand = smooth_val(candidate)
        if accelerate and f_cand > f_beta:
            # Momentum overshot: restart from the last monotone iterate.
            t_acc = 1.0
            grad = 2.0 * (Q @ beta) + q
            candidate = np.clip(beta - step * grad, 0.0, B)
            f_cand = smooth_val(candidate)
        if accelerate:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
            momentum = candidate + ((t_acc - 1.0) / t_next) * (candidate - beta)
            t_acc = t_next
        beta, f_beta = candidate, f_cand
        if history is not None:
            history.append(f_beta)
        if it % check_every == 0 or it == max_iter:
            grad_at_beta = 2.0 * (Q @ beta) + q
            residual = float(
                np.max(np.abs(beta - np.clip(beta - grad_at_beta, 0.0, B)))
            )
            if residual <= tol:
                converged = True
                break

    obj = _norm_or_none(problem, beta)
    return Weights(
        beta=beta, box_upper=B, objective_value=obj, iterations=it,
        converged=converged, residual=residual,
        objective_history=np.asarray(history) if history is not None else None,
    )


def _norm_or_none(problem: QpProblem, beta: np.ndarray) -> float | None:
    if problem.const_term is None:
        return None
    return objective_norm(problem, beta)


def _power_lambda_max(Q: np.ndarray, rel_tol: float = 1e-6, max_iter: int = 500) -> float:
    """Largest eigenvalue of symmetric PSD Q by power iteration.

    Deterministic all-ones start; converges monotonically from below for
    PSD matrices.
    """
    n = Q.shape[0]
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(max_iter):
        w = Q @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ (Q @ v))
        if abs(lam_new - lam) <= rel_tol * max(abs(lam_new), 1e-300):
            return lam_new
        lam = lam_new
    return lam


def _min_eig_estimate(Q: np.ndarray, lam_max: float, iters: int = 40) -> float:
    """Rough smallest eigenvalue via power iteration on lam_max*I - Q."""
    n = Q.shape[0]
    v = np.ones(n) / np.sqrt(n)
    # deterministic perturbation so v is not orthogonal to extreme eigvecs
    v[::2] += 1.0 / np.sqrt(n)
    v /= np.linalg.norm(v)
    shift = lam_max if lam_max > 0 else 1.0
    for _ in range(iters):
        w = shift * v - Q @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return shift
        v = w / norm
    return float(v @ (Q @ v))


def _ensure_near_psd(Q: np.ndarray, n: int, lam_max: float) -> tuple[np.ndarray, float]:
    """Check approximate positive semidefiniteness; jitter once if barely
    indefinite, raise if clearly indefinite.  Returns the (possibly
    jittered) matrix and the matching largest-eigenvalue estimate."""
    min_eig = _min_eig_estimate(Q, lam_max)
    floor = -1e-8 * n
    if min_eig >= floor:
        return Q, lam_max
    jitter = 1e-10 * float(np.trace(Q)) / n
    Q = Q + jitter * np.eye(n)
    min_eig = _min_eig_estimate(Q, lam_max + jitter)
    if min_eig < floor:
        raise NumericalError(
            f"quadratic term is indefinite (estimated min eigenvalue "
            f"{min_eig:.3e} < {floor:.3e} even after diagonal jitter); "
            "check the kernel matrix for corrupted entries"
        )
    return Q, lam_max + jitter
