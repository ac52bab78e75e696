"""Kernel families, Gram matrices, and sup-norm constants.

Four families are supported: Gaussian ``exp(-||x-x'||^2 / sigma^2)``,
linear ``<x, x'>``, polynomial ``(<x, x'> + offset)^degree`` and inverse
multiquadric ``(c^2 + ||x-x'||^2)^(-alpha)``.  Every spec can report a
constant ``C`` with ``sup |k| <= C^2`` on the ball of ``domain_radius``;
bounded-everywhere families (Gaussian, inverse multiquadric) do not need
a radius, the unbounded ones refuse to produce ``C`` without one.

All distance work uses direct elementwise differences (never the expanded
``x.x - 2x.y + y.y`` form) so Gram matrices stay positive semidefinite to
tight tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from .errors import InputError

FAMILIES = ("gaussian", "linear", "polynomial", "inverse_multiquadric")

# Row-chunk budget for pairwise blocks, in float64 elements (~64 MB).
_CHUNK_ELEMS = 8_000_000


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its parameters.

    Parameters
    ----------
    family : str
        One of ``gaussian``, ``linear``, ``polynomial``,
        ``inverse_multiquadric``.
    sigma : float
        Bandwidth of the Gaussian family.
    degree, offset : int, float
        Polynomial family parameters; ``offset >= 0``, ``degree >= 1``.
    c, alpha : float
        Inverse multiquadric parameters, both positive.
    domain_radius : float or None
        Radius of the ball on which inputs live.  Required by
        :meth:`sup_bound` for the linear and polynomial families.
    """

    family: str
    sigma: float | None = None
    degree: int | None = None
    offset: float | None = None
    c: float | None = None
    alpha: float | None = None
    domain_radius: float | None = field(default=None)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(
                f"unknown kernel family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.family == "gaussian":
            if self.sigma is None or not (self.sigma > 0):
                raise InputError("gaussian kernel needs sigma > 0")
        elif self.family == "polynomial":
            if self.degree is None or int(self.degree) < 1 or self.degree != int(self.degree):
                raise InputError("polynomial kernel needs integer degree >= 1")
            if self.offset is None or self.offset < 0:
                raise InputError("polynomial kernel needs offset >= 0")
        elif self.family == "inverse_multiquadric":
            if self.c is None or not (self.c > 0):
                raise InputError("inverse multiquadric kernel needs c > 0")
            if self.alpha is None or not (self.alpha > 0):
                raise InputError("inverse multiquadric kernel needs alpha > 0")
        if self.domain_radius is not None and not (self.domain_radius > 0):
            raise InputError("domain_radius must be positive when given")

    # -- constructors ----------------------------------------------------

    @classmethod
    def gaussian(cls, sigma: float, domain_radius: float | None = None) -> "KernelSpec":
        return cls(family="gaussian", sigma=float(sigma), domain_radius=domain_radius)

    @classmethod
    def linear(cls, domain_radius: float | None = None) -> "KernelSpec":
        return cls(family="linear", domain_radius=domain_radius)

    @classmethod
    def polynomial(
        cls, degree: int, offset: float = 0.0, domain_radius: float | None = None
    ) -> "KernelSpec":
        return cls(
            family="polynomial", degree=int(degree), offset=float(offset),
            domain_radius=domain_radius,
        )

    @classmethod
    def inverse_multiquadric(
        cls, c: float, alpha: float, domain_radius: float | None = None
    ) -> "KernelSpec":
        return cls(
            family="inverse_multiquadric", c=float(c), alpha=float(alpha),
            domain_radius=domain_radius,
        )

    # -- evaluation ------------------------------------------------------

    def eval(self, x, x2) -> float:
        """Evaluate k(x, x2) for two feature vectors."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        if x.shape != x2.shape or x.ndim != 1:
            raise InputError(f"dimension mismatch: {x.shape} vs {x2.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
            raise InputError("non-finite kernel input")
        return float(self.gram(x[None, :], x2[None, :])[0, 0])

    def gram(self, X, X2) -> np.ndarray:
        """Pairwise kernel matrix between the rows of X and X2."""
        X = _as_matrix(X)
        X2 = _as_matrix(X2)
        if X.shape[1] != X2.shape[1]:
            raise InputError(
                f"feature-dimension mismatch: {X.shape[1]} vs {X2.shape[1]}"
            )
        n, m = X.shape[0], X2.shape[0]
        out = np.empty((n, m))
        for lo, hi in _row_chunks(n, m):
            out[lo:hi] = self._block(X[lo:hi], X2)
        return out

    def _block(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Kernel values for one row chunk; A is (a, d), B is (b, d)."""
        if self.family == "gaussian":
            sq = _sq_dists(A, B)
            return np.exp(-sq / (self.sigma * self.sigma))
        if self.family == "inverse_multiquadric":
            sq = _sq_dists(A, B)
            return (self.c * self.c + sq) ** (-self.alpha)
        inner = A @ B.T
        if self.family == "linear":
            return inner
        return (inner + self.offset) ** self.degree

    def sup_bound(self) -> float:
        """Constant C with sup |k| <= C^2 on the ball of ``domain_radius``."""
        if self.family == "gaussian":
            return 1.0
        if self.family == "inverse_multiquadric":
            return float(self.c ** (-self.alpha))
        if self.domain_radius is None:
            raise InputError(
                f"{self.family} kernel is unbounded on R^d; a domain_radius is "
                "required before a sup bound can be reported"
            )
        r = self.domain_radius
        if self.family == "linear":
            return float(r)
        return float((r * r + self.offset) ** (self.degree / 2.0))

    # -- serialization ---------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_dict(self) -> dict:
        d = {"family": self.family}
        for name in ("sigma", "degree", "offset", "c", "alpha", "domain_radius"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        if "family" not in d:
            raise InputError("kernel JSON needs a 'family' field")
        known = {"family", "sigma", "degree", "offset", "c", "alpha", "domain_radius"}
        extra = set(d) - known
        if extra:
            raise InputError(f"unknown kernel fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"kernel JSON does not parse: {exc}") from exc
        if not isinstance(d, dict):
            raise InputError("kernel JSON must be an object")
        return cls.from_dict(d)


def cross_apply(spec: KernelSpec, X, X2, weights=None) -> np.ndarray:
    """Row-chunked ``sum_j k(x_i, x2_j) * w_j`` without materializing the
    full cross matrix.  ``weights=None`` means all-ones (plain row sums)."""
    X = _as_matrix(X)
    X2 = _as_matrix(X2)
    if X.shape[1] != X2.shape[1]:
        raise InputError(f"feature-dimension mismatch: {X.shape[1]} vs {X2.shape[1]}")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (X2.shape[0],):
            raise InputError("weights length must match the second sample")
    n, m = X.shape[0], X2.shape[0]
    out = np.empty(n)
    for lo, hi in _row_chunks(n, m):
        block = spec._block(X[lo:hi], X2)
        out[lo:hi] = block.sum(axis=1) if weights is None else block @ weights
    return out


def pair_sum(spec: KernelSpec, X) -> float:
    """Exact ``sum_{i,j} k(x_i, x_j)`` over all ordered pairs of rows of X,
    exploiting symmetry (strict upper triangle doubled plus the diagonal)."""
    X = _as_matrix(X)
    n = X.shape[0]
    if spec.family == "gaussian":
        diag_vals = np.ones(n)
    elif spec.family == "inverse_multiquadric":
        diag_vals = np.full(n, spec.c ** (-2.0 * spec.alpha))
    elif spec.family == "linear":
        diag_vals = np.einsum("ij,ij->i", X, X)
    else:
        diag_vals = (np.einsum("ij,ij->i", X, X) + spec.offset) ** spec.degree
    total = float(diag_vals.sum())
    upper = 0.0
    for lo, hi in _row_chunks(n, n):
        block = spec._block(X[lo:hi], X)
        # strict upper triangle of this row band
        cols = np.arange(n)[None, :]
        rows = np.arange(lo, hi)[:, None]
        upper += float(np.where(cols > rows, block, 0.0).sum())
    return total + 2.0 * upper


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"expected a 2-d sample matrix, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise InputError("empty sample")
    if not np.all(np.isfinite(X)):
        raise InputError("non-finite entries in sample matrix")
    return X


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances by direct differencing."""
    d = A.shape[1]
    if d == 1:
        diff = A[:, 0][:, None] - B[:, 0][None, :]
        return diff * diff
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _row_chunks(n: int, m: int):
    step = max(1, _CHUNK_ELEMS // max(m, 1))
    for lo in range(0, n, step):
        yield lo, min(n, lo + step)
