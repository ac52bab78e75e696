"""Synthetic covariate-shift scenarios with exact ground truth.

Each scenario fixes a pair of feature distributions on a compact box, a
regression function, and a label-noise mechanism, such that everything
an evaluation needs is available in closed or high-precision form: the
true density ratio and its supremum, the RKHS norm of the regression
function when it has one, and the target mean computed by quadrature.

Built-ins:

* ``s0`` — no-shift control: train and test features identically
  distributed, density ratio identically one.
* ``s1`` — smooth regime: 1-d truncated-normal shift, regression
  function a small sum of kernel bumps so its RKHS norm is an exact
  3x3 quadratic form.
* ``s2`` — rough regime: same marginals as s1 but a tent-shaped
  regression function (Lipschitz, kink at 0.5) that no smooth-kernel
  expansion captures.
* ``s3`` — 2-d mixture shift for multivariate smoke tests, Bernoulli
  labels.

Label noise is uniform, ``y = m(x) + U(-w, w)``, or Bernoulli with mean
``m(x)``; both keep the conditional mean exactly ``m(x)`` and the labels
inside [0, 1], so quadrature against the test density gives the exact
estimand.

Determinism: every trial derives its generator from a Philox key
``master_seed * 2^20 + trial_index``, so results do not depend on
scheduling and replays are exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, optimize, stats
from scipy.special import ndtri

from .bounds import BoundInputs, InRkhs, bound_in_rkhs
from .errors import InputError
from .estimators import (
    Dataset,
    EstimateReport,
    kde_ratio_estimate,
    kmm_estimate,
    oracle_estimate,
    plugin_estimate,
)
from .kernels import KernelSpec
from .kmm import assemble_qp, solve_kmm

TRIAL_INDEX_SPACE = 2 ** 20

# z for a two-sided 95% interval
_WILSON_Z = ndtri(0.975)


@dataclass(frozen=True)
class ShiftScenario:
    """A synthetic generator with analytically known ground truth."""

    id: str
    description: str
    dim: int
    kernel: KernelSpec
    regime_tag: str            # "in_rkhs" | "poly" | "rough"
    B_true: float
    norm_m: float | None       # exact RKHS norm of m, when it has one
    ey_te: float               # estimand: mean outcome under the test law
    noise: str                 # "uniform" | "bernoulli"
    noise_halfwidth: float
    _sample_tr: Callable = field(repr=False)
    _sample_te: Callable = field(repr=False)
    _beta: Callable = field(repr=False)
    _m: Callable = field(repr=False)

    def sample_train(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self._sample_tr(rng, int(n))

    def sample_test(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self._sample_te(rng, int(n))

    def beta(self, X) -> np.ndarray:
        return self._beta(np.asarray(X, dtype=float))

    def m(self, X) -> np.ndarray:
        return self._m(np.asarray(X, dtype=float))

    def sample_labels(self, rng: np.random.Generator, X) -> np.ndarray:
        mean = self.m(X)
        if self.noise == "uniform":
            w = self.noise_halfwidth
            return mean + rng.uniform(-w, w, size=mean.shape)
        return (rng.random(size=mean.shape) < mean).astype(float)

    def describe(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "dim": self.dim,
            "kernel": self.kernel.to_dict(),
            "regime_tag": self.regime_tag,
            "B_true": self.B_true,
            "norm_m": self.norm_m,
            "ey_te": self.ey_te,
            "noise": self.noise,
        }


# ---------------------------------------------------------------------------
# scenario construction


def _truncnorm(mu: float, sigma: float, lo: float = 0.0, hi: float = 1.0):
    return stats.truncnorm((lo - mu) / sigma, (hi - mu) / sigma, loc=mu, scale=sigma)


def _sup_on_box(fn, dim: int, grid: int = 2001) -> float:
    """Supremum of a smooth positive function on the unit box by grid scan
    plus bounded local refinement."""
    if dim == 1:
        xs = np.linspace(0.0, 1.0, grid)
        vals = fn(xs[:, None])
        i = int(np.argmax(vals))
        lo = xs[max(i - 1, 0)]
        hi = xs[min(i + 1, grid - 1)]
        res = optimize.minimize_scalar(
            lambda t: -float(fn(np.array([[t]]))[0]),
            bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-13},
        )
        return float(max(vals.max(), -res.fun))
    side = 201
    xs = np.linspace(0.0, 1.0, side)
    XX, YY = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([XX.ravel(), YY.ravel()], axis=1)
    vals = fn(pts)
    i = int(np.argmax(vals))
    res = optimize.minimize(
        lambda p: -float(fn(p[None, :])[0]),
        pts[i], method="L-BFGS-B",
        bounds=[(0.0, 1.0)] * dim,
        options={"ftol": 1e-15, "gtol": 1e-12},
    )
    return float(max(vals.max(), -res.fun))


def _bump_sum_m(kernel_sigma: float, centers: np.ndarray, coefs: np.ndarray):
    """Regression function built from kernel bumps; lies in the Gaussian
    RKHS with squared norm coefs' K(centers) coefs."""
    def m(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        diff = X[:, None, :] - centers[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        return np.exp(-sq / kernel_sigma ** 2) @ coefs
    return m


def _check_noise_headroom(m_fn, halfwidth: float, dim: int) -> None:
    """Uniform label noise keeps y in [0,1] only when the regression
    function stays inside [halfwidth, 1 - halfwidth]; verify on a grid."""
    if dim == 1:
        pts = np.linspace(0.0, 1.0, 4001)[:, None]
    else:
        xs = np.linspace(0.0, 1.0, 101)
        XX, YY = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([XX.ravel(), YY.ravel()], axis=1)
    vals = m_fn(pts)
    lo, hi = float(vals.min()), float(vals.max())
    if lo < halfwidth - 1e-12 or hi > 1.0 - halfwidth + 1e-12:
        raise InputError(
            f"regression range [{lo:.4f}, {hi:.4f}] leaves no room for "
            f"uniform noise of half-width {halfwidth}"
        )


# Shared regression-function design for the 1-d scenarios.  The bump
# coefficients put the smooth scenario's median-error decay squarely on
# the n^(-1/2) path at the default grid; the tent parameters keep the
# kinked scenario inside the same label-noise headroom.
_BUMP_SIGMA = 0.3
_BUMP_CENTERS = (0.25, 0.60, 0.95)
_BUMP_COEFS = (0.225, 0.15, 0.375)
_NOISE_HALFWIDTH = 0.04


def _build_s1(
    sigma_k: float = _BUMP_SIGMA,
    noise_halfwidth: float = _NOISE_HALFWIDTH,
    centers=_BUMP_CENTERS,
    coefs=_BUMP_COEFS,
) -> ShiftScenario:
    sigma_marg = np.sqrt(0.15)
    tn_tr = _truncnorm(0.3, sigma_marg)
    tn_te = _truncnorm(0.6, sigma_marg)
    kern = KernelSpec.gaussian(sigma_k, domain_radius=1.0)
    centers = np.asarray(centers, dtype=float)[:, None]
    coefs = np.asarray(coefs, dtype=float)
    m = _bump_sum_m(sigma_k, centers, coefs)
    K_centers = kern.gram(centers, centers)
    norm_m = float(np.sqrt(coefs @ K_centers @ coefs))
    _check_noise_headroom(m, noise_halfwidth, 1)

    def beta(X):
        X = np.atleast_2d(X)
        return tn_te.pdf(X[:, 0]) / tn_tr.pdf(X[:, 0])

    b_true = _sup_on_box(beta, 1)
    ey, _ = integrate.quad(
        lambda x: float(m(np.array([[x]]))[0]) * tn_te.pdf(x), 0.0, 1.0,
        epsabs=1e-12, epsrel=1e-12,
    )
    return ShiftScenario(
        id="s1",
        description="1-d truncated-normal shift, smooth regression function "
                    "with exact RKHS norm, uniform label noise",
        dim=1, kernel=kern, regime_tag="in_rkhs",
        B_true=b_true, norm_m=norm_m, ey_te=float(ey),
        noise="uniform", noise_halfwidth=noise_halfwidth,
        _sample_tr=lambda rng, n: tn_tr.rvs(size=n, random_state=rng)[:, None],
        _sample_te=lambda rng, n: tn_te.rvs(size=n, random_state=rng)[:, None],
        _beta=beta, _m=m,
    )


def _build_s2(
    sigma_k: float = _BUMP_SIGMA,
    noise_halfwidth: float = _NOISE_HALFWIDTH,
    floor: float = 0.07,
    slope: float = 1.7,
) -> ShiftScenario:
    sigma_marg = np.sqrt(0.15)
    tn_tr = _truncnorm(0.3, sigma_marg)
    tn_te = _truncnorm(0.6, sigma_marg)
    kern = KernelSpec.gaussian(sigma_k, domain_radius=1.0)

    def m(X):
        X = np.atleast_2d(X)
        x = X[:, 0]
        return floor + slope * np.minimum(x, 1.0 - x)

    _check_noise_headroom(m, noise_halfwidth, 1)

    def beta(X):
        X = np.atleast_2d(X)
        return tn_te.pdf(X[:, 0]) / tn_tr.pdf(X[:, 0])

    b_true = _sup_on_box(beta, 1)
    # split at the kink so the quadrature sees smooth pieces
    ey = 0.0
    for a, b in ((0.0, 0.5), (0.5, 1.0)):
        part, _ = integrate.quad(
            lambda x: float(m(np.array([[x]]))[0]) * tn_te.pdf(x), a, b,
            epsabs=1e-12, epsrel=1e-12,
        )
        ey += part
    return ShiftScenario(
        id="s2",
        description="same marginals as s1 but a tent-shaped (kinked) "
                    "regression function; rough regime for smooth kernels",
        dim=1, kernel=kern, regime_tag="rough",
        B_true=b_true, norm_m=None, ey_te=float(ey),
        noise="uniform", noise_halfwidth=noise_halfwidth,
        _sample_tr=lambda rng, n: tn_tr.rvs(size=n, random_state=rng)[:, None],
        _sample_te=lambda rng, n: tn_te.rvs(size=n, random_state=rng)[:, None],
        _beta=beta, _m=m,
    )


def _build_s0() -> ShiftScenario:
    sigma_marg = np.sqrt(0.15)
    tn = _truncnorm(0.45, sigma_marg)
    kern = KernelSpec.gaussian(_BUMP_SIGMA, domain_radius=1.0)
    centers = np.asarray(_BUMP_CENTERS, dtype=float)[:, None]
    coefs = np.asarray(_BUMP_COEFS, dtype=float)
    m = _bump_sum_m(_BUMP_SIGMA, centers, coefs)
    K_centers = kern.gram(centers, centers)
    norm_m = float(np.sqrt(coefs @ K_centers @ coefs))
    _check_noise_headroom(m, _NOISE_HALFWIDTH, 1)
    ey, _ = integrate.quad(
        lambda x: float(m(np.array([[x]]))[0]) * tn.pdf(x), 0.0, 1.0,
        epsabs=1e-12, epsrel=1e-12,
    )
    return ShiftScenario(
        id="s0",
        description="no-shift control: train and test features share one "
                    "truncated-normal law, density ratio identically one",
        dim=1, kernel=kern, regime_tag="in_rkhs",
        B_true=1.0, norm_m=norm_m, ey_te=float(ey),
        noise="uniform", noise_halfwidth=_NOISE_HALFWIDTH,
        _sample_tr=lambda rng, n: tn.rvs(size=n, random_state=rng)[:, None],
        _sample_te=lambda rng, n: tn.rvs(size=n, random_state=rng)[:, None],
        _beta=lambda X: np.ones(np.atleast_2d(X).shape[0]),
        _m=m,
    )


def _build_s3() -> ShiftScenario:
    sigma_comp = np.sqrt(0.1)
    mus = [np.array([0.3, 0.3]), np.array([0.7, 0.7])]
    w_tr, w_te = np.array([0.7, 0.3]), np.array([0.3, 0.7])
    kern = KernelSpec.gaussian(0.4, domain_radius=float(np.sqrt(2.0)))
    # per-axis truncated marginals; with isotropic components and a box
    # domain the truncated 2-d component densities factorize
    axes = [[_truncnorm(mu[a], sigma_comp) for a in range(2)] for mu in mus]

    def comp_pdf(X, ci):
        X = np.atleast_2d(X)
        return axes[ci][0].pdf(X[:, 0]) * axes[ci][1].pdf(X[:, 1])

    def mix_pdf(X, weights):
        return weights[0] * comp_pdf(X, 0) + weights[1] * comp_pdf(X, 1)

    def beta(X):
        return mix_pdf(X, w_te) / mix_pdf(X, w_tr)

    def sampler(weights):
        def sample(rng, n):
            comp = (rng.random(n) < weights[1]).astype(int)
            out = np.empty((n, 2))
            for ci in (0, 1):
                mask = comp == ci
                cnt = int(mask.sum())
                if cnt:
                    for a in range(2):
                        out[mask, a] = axes[ci][a].rvs(size=cnt, random_state=rng)
            return out
        return sample

    bump_center = np.array([0.6, 0.4])

    def m(X):
        X = np.atleast_2d(X)
        sq = ((X - bump_center) ** 2).sum(axis=1)
        return 0.15 + 0.7 * np.exp(-sq / 0.2)

    b_true = _sup_on_box(beta, 2)
    # estimand: 0.15 + 0.7 * sum_c w_te[c] * prod_axis int bump_a * tn_a;
    # the bump factorizes per axis so only 1-d quadratures are needed
    ey = 0.15
    for ci in (0, 1):
        prod = 1.0
        for a in range(2):
            val, _ = integrate.quad(
                lambda x, a=a, ci=ci: np.exp(-(x - bump_center[a]) ** 2 / 0.2)
                * axes[ci][a].pdf(x),
                0.0, 1.0, epsabs=1e-12, epsrel=1e-12,
            )
            prod *= val
        ey += 0.7 * w_te[ci] * prod
    return ShiftScenario(
        id="s3",
        description="2-d two-component mixture with swapped component "
                    "weights between train and test, Bernoulli labels",
        dim=2, kernel=kern, regime_tag="poly",
        B_true=b_true, norm_m=None, ey_te=float(ey),
        noise="bernoulli", noise_halfwidth=0.0,
        _sample_tr=sampler(w_tr), _sample_te=sampler(w_te),
        _beta=beta, _m=m,
    )


_BUILDERS = {"s0": _build_s0, "s1": _build_s1, "s2": _build_s2, "s3": _build_s3}


@lru_cache(maxsize=None)
def get_scenario(scenario_id: str) -> ShiftScenario:
    try:
        builder = _BUILDERS[scenario_id]
    except KeyError:
        raise InputError(
            f"unknown scenario {scenario_id!r}; available: "
            f"{sorted(_BUILDERS)}"
        ) from None
    return builder()


def builtin_scenarios() -> list[ShiftScenario]:
    return [get_scenario(sid) for sid in sorted(_BUILDERS)]


# ---------------------------------------------------------------------------
# trial running


@dataclass(frozen=True)
class EstimatorConfig:
    """How to run one estimator inside a trial.

    ``B=None`` and ``kernel=None`` default to the scenario's exact
    ``B_true`` and its own kernel.  ``compute_objective=False`` skips the
    test-block constant (quadratic in n_te), leaving the achieved
    matching norm unreported; rate sweeps use this since only the
    estimate matters there.
    """

    kind: str = "kmm"
    kernel: KernelSpec | None = None
    B: float | None = None
    lam: float | None = None
    bandwidth_tr: float | None = None
    bandwidth_te: float | None = None
    tol: float = 1e-6
    max_iter: int | None = None
    compute_objective: bool = True

    def __post_init__(self):
        if self.kind not in ("kmm", "plugin", "kde_ratio", "oracle"):
            raise InputError(f"unknown estimator kind {self.kind!r}")


@dataclass
class TrialRecord:
    scenario: str
    estimator: str
    n_tr: int
    n_te: int
    seed: int
    abs_error: float
    lhat: float | None
    runtime_ms: float
    point_unit_scale: float
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    def csv_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "estimator": self.estimator,
            "n_tr": self.n_tr,
            "n_te": self.n_te,
            "seed": self.seed,
            "abs_error": "" if np.isnan(self.abs_error) else repr(self.abs_error),
            "lhat": "" if self.lhat is None else repr(self.lhat),
            "runtime_ms": repr(self.runtime_ms),
        }


def trial_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by the trial seed; streams for
    different seeds are independent regardless of scheduling."""
    if seed < 0:
        raise InputError("trial seed must be nonnegative")
    return np.random.Generator(np.random.Philox(key=seed))


def compose_seed(master_seed: int, trial_index: int) -> int:
    if not (0 <= trial_index < TRIAL_INDEX_SPACE):
        raise InputError(
            f"trial index {trial_index} outside the reserved space "
            f"[0, {TRIAL_INDEX_SPACE})"
        )
    if master_seed < 0:
        raise InputError("master seed must be nonnegative")
    return master_seed * TRIAL_INDEX_SPACE + trial_index


def run_trial(
    scenario: ShiftScenario,
    config: EstimatorConfig,
    n_tr: int,
    n_te: int,
    seed: int,
) -> TrialRecord:
    """Sample one dataset pair and run one estimator on it."""
    records = _run_trial_multi(scenario, (config,), n_tr, n_te, seed)
    return records[0]


def _run_trial_multi(
    scenario: ShiftScenario,
    configs: tuple,
    n_tr: int,
    n_te: int,
    seed: int,
) -> list[TrialRecord]:
    """Run several estimator configs on one shared sampled dataset."""
    if n_tr < 1 or n_te < 1:
        raise InputError("sample sizes must be at least 1")
    rng = trial_rng(seed)
    X_tr = scenario.sample_train(rng, n_tr)
    y = scenario.sample_labels(rng, X_tr)
    X_te = scenario.sample_test(rng, n_te)
    train = Dataset.from_arrays(X_tr, y)
    beta_true = scenario.beta(X_tr)
    m_true = scenario.m(X_tr)
    out = []
    for config in configs:
        t0 = time.perf_counter()
        try:
            report = _dispatch(scenario, config, train, X_te, beta_true)
            err_msg = None
        except Exception as exc:  # failed trial becomes a record, not a crash
            report = None
            err_msg = f"{type(exc).__name__}: {exc}"
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        if report is None:
            out.append(TrialRecord(
                scenario=scenario.id, estimator=config.kind, n_tr=n_tr,
                n_te=n_te, seed=seed, abs_error=float("nan"), lhat=None,
                runtime_ms=elapsed_ms, point_unit_scale=float("nan"),
                error=err_msg,
            ))
            continue
        diag = dict(report.diagnostics)
        if report.beta is not None:
            # decomposition pieces that are computable with known m, beta
            bhat = report.beta
            diag["weighted_label_noise"] = float(
                abs(bhat @ (y - m_true)) / n_tr
            )
            diag["oracle_gap"] = float(
                abs(beta_true @ m_true / n_tr - scenario.ey_te)
            )
            diag["mean_weight_drift"] = float(abs(bhat.mean() - 1.0))
            diag["weight_mse"] = float(np.mean((bhat - beta_true) ** 2))
        lhat = None
        if report.weights_summary is not None:
            lhat = report.weights_summary.get("lhat")
        out.append(TrialRecord(
            scenario=scenario.id, estimator=config.kind, n_tr=n_tr,
            n_te=n_te, seed=seed,
            abs_error=float(abs(report.point_unit_scale - scenario.ey_te)),
            lhat=lhat, runtime_ms=elapsed_ms,
            point_unit_scale=float(report.point_unit_scale),
            diagnostics=diag,
        ))
    return out


def _dispatch(
    scenario: ShiftScenario,
    config: EstimatorConfig,
    train: Dataset,
    X_te: np.ndarray,
    beta_true: np.ndarray,
) -> EstimateReport:
    kernel = config.kernel if config.kernel is not None else scenario.kernel
    B = config.B if config.B is not None else scenario.B_true
    if config.kind == "kmm":
        return kmm_estimate(
            train, X_te, kernel, B, tol=config.tol, max_iter=config.max_iter,
            compute_objective=config.compute_objective,
        )
    if config.kind == "plugin":
        return plugin_estimate(train, X_te, kernel, lam=config.lam)
    if config.kind == "kde_ratio":
        return kde_ratio_estimate(
            train, X_te, B,
            bandwidth_tr=config.bandwidth_tr, bandwidth_te=config.bandwidth_te,
        )
    return oracle_estimate(train, beta_true)


def _run_task(scenario_id: str, configs: tuple, n_tr: int, n_te: int, seed: int):
    # module-level so worker processes can import it; scenarios are
    # rebuilt per process from the registry
    return _run_trial_multi(get_scenario(scenario_id), configs, n_tr, n_te, seed)


def _run_batch(tasks: list[tuple], threads: int = 1) -> list[list[TrialRecord]]:
    """tasks: (scenario_id, configs, n_tr, n_te, seed). Order of results
    matches the order of tasks regardless of threads."""
    if threads == 1:
        return [_run_task(*t) for t in tasks]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=threads, backend="loky")(
        delayed(_run_task)(*t) for t in tasks
    )


# ---------------------------------------------------------------------------
# measurement harness


@dataclass
class RateFit:
    """Least-squares line through (log n, log median_abs_error)."""

    slope: float
    intercept: float
    r_squared: float
    n_grid: list
    medians: list

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_grid": list(self.n_grid),
            "medians": list(self.medians),
        }


def fit_rate(n_grid, medians) -> RateFit:
    n_grid = [int(n) for n in n_grid]
    medians = [float(v) for v in medians]
    if len(n_grid) != len(medians) or len(n_grid) < 2:
        raise InputError("need at least two (n, median) pairs")
    if any(v <= 0 for v in medians):
        raise InputError("medians must be positive to fit a log-log line")
    lx = np.log(np.asarray(n_grid, dtype=float))
    ly = np.log(np.asarray(medians, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(
        slope=float(slope), intercept=float(intercept), r_squared=r2,
        n_grid=n_grid, medians=medians,
    )


@dataclass
class SweepResult:
    records: list
    fit: RateFit
    n_te: int


def sweep_rates(
    scenario: ShiftScenario,
    config: EstimatorConfig,
    n_grid,
    reps: int,
    master_seed: int = 0,
    n_te: int | None = None,
    threads: int = 1,
) -> SweepResult:
    """Median absolute error per training size, plus a log-log rate fit.

    The test size is held fixed and large (default 10x the largest n in
    the grid) so the training-size exponent dominates the fit.  The
    matching-norm constant is skipped in these runs; it scales
    quadratically in n_te and does not affect the estimate.
    """
    n_grid = [int(n) for n in n_grid]
    if sorted(n_grid) != n_grid or len(set(n_grid)) != len(n_grid):
        raise InputError("n_grid must be strictly ascending")
    if reps < 30:
        raise InputError(
            "reps must be at least 30: a rate fit through noisier medians "
            "is not meaningful"
        )
    if n_te is None:
        n_te = 10 * max(n_grid)
    if len(n_grid) * reps > TRIAL_INDEX_SPACE:
        raise InputError("grid x reps exceeds the reserved trial-index space")
    config = _without_objective(config)
    tasks = []
    for gi, n in enumerate(n_grid):
        for rep in range(reps):
            seed = compose_seed(master_seed, gi * reps + rep)
            tasks.append((scenario.id, (config,), n, n_te, seed))
    results = _run_batch(tasks, threads)
    records = [rec for batch in results for rec in batch]
    medians = []
    for n in n_grid:
        errs = [r.abs_error for r in records
                if r.n_tr == n and not np.isnan(r.abs_error)]
        if not errs:
            raise InputError(f"all trials failed at n_tr={n}")
        medians.append(float(np.median(errs)))
    return SweepResult(records=records, fit=fit_rate(n_grid, medians), n_te=n_te)


def _without_objective(config: EstimatorConfig) -> EstimatorConfig:
    if config.kind != "kmm" or not config.compute_objective:
        return config
    return EstimatorConfig(
        kind=config.kind, kernel=config.kernel, B=config.B, lam=config.lam,
        bandwidth_tr=config.bandwidth_tr, bandwidth_te=config.bandwidth_te,
        tol=config.tol, max_iter=config.max_iter, compute_objective=False,
    )


def wilson_interval(successes: int, trials: int, z: float = _WILSON_Z):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise InputError("trials must be at least 1")
    if not (0 <= successes <= trials):
        raise InputError("successes must lie in [0, trials]")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = z * np.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / denom
    return float(max(center - half, 0.0)), float(min(center + half, 1.0))


@dataclass
class CoverageResult:
    fraction: float
    wilson_low: float
    wilson_high: float
    bound_total: float
    delta: float
    n_tr: int
    n_te: int
    reps: int
    records: list

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
            "bound_total": self.bound_total,
            "delta": self.delta,
            "n_tr": self.n_tr,
            "n_te": self.n_te,
            "reps": self.reps,
        }


def measure_coverage(
    scenario: ShiftScenario,
    n_tr: int,
    n_te: int,
    delta: float,
    reps: int,
    master_seed: int = 0,
    config: EstimatorConfig | None = None,
    threads: int = 1,
) -> CoverageResult:
    """Fraction of trials whose realized error the a-priori bound covers.

    Only scenarios whose regression function has a known RKHS norm
    support this: the bound needs that norm and the exact weight cap.
    """
    if scenario.regime_tag != "in_rkhs" or scenario.norm_m is None:
        raise InputError(
            f"scenario {scenario.id!r} has no exact RKHS norm; coverage "
            "can only be measured in the in-RKHS regime"
        )
    if reps < 1:
        raise InputError("reps must be at least 1")
    if config is None:
        config = EstimatorConfig(kind="kmm")
    if config.kind != "kmm":
        raise InputError("coverage is defined for the kmm estimator")
    bound = bound_in_rkhs(BoundInputs(
        B=scenario.B_true, C=scenario.kernel.sup_bound(), delta=delta,
        n_tr=n_tr, n_te=n_te, regime=InRkhs(scenario.norm_m),
    ))
    tasks = [
        (scenario.id, (config,), n_tr, n_te, compose_seed(master_seed, i))
        for i in range(reps)
    ]
    results = _run_batch(tasks, threads)
    records = [rec for batch in results for rec in batch]
    errs = np.array([r.abs_error for r in records])
    if np.isnan(errs).any():
        raise InputError("coverage run contains failed trials")
    hits = int((errs <= bound.total).sum())
    low, high = wilson_interval(hits, reps)
    return CoverageResult(
        fraction=hits / reps, wilson_low=low, wilson_high=high,
        bound_total=bound.total, delta=delta, n_tr=n_tr, n_te=n_te,
        reps=reps, records=records,
    )


@dataclass
class ComparisonResult:
    n_grid: list
    estimators: list
    medians: dict            # estimator -> {n: median abs_error}
    records: list

    def to_dict(self) -> dict:
        return {
            "n_grid": list(self.n_grid),
            "estimators": list(self.estimators),
            "medians": {k: {str(n): v for n, v in d.items()}
                        for k, d in self.medians.items()},
        }


def compare_estimators(
    scenario: ShiftScenario,
    n_grid,
    reps: int,
    master_seed: int = 0,
    estimators=("kmm", "plugin", "kde_ratio", "oracle"),
    n_te: int | None = None,
    threads: int = 1,
) -> ComparisonResult:
    """Median error of several estimators on identical sampled data.

    Every estimator sees the same dataset within a (n, rep) cell, so
    differences are attributable to the estimators alone.
    """
    n_grid = [int(n) for n in n_grid]
    if reps < 1:
        raise InputError("reps must be at least 1")
    if n_te is None:
        n_te = 10 * max(n_grid)
    if len(n_grid) * reps > TRIAL_INDEX_SPACE:
        raise InputError("grid x reps exceeds the reserved trial-index space")
    configs = tuple(
        _without_objective(EstimatorConfig(kind=k)) for k in estimators
    )
    tasks = []
    for gi, n in enumerate(n_grid):
        for rep in range(reps):
            seed = compose_seed(master_seed, gi * reps + rep)
            tasks.append((scenario.id, configs, n, n_te, seed))
    results = _run_batch(tasks, threads)
    records = [rec for batch in results for rec in batch]
    medians: dict = {k: {} for k in estimators}
    for k in estimators:
        for n in n_grid:
            errs = [r.abs_error for r in records
                    if r.estimator == k and r.n_tr == n
                    and not np.isnan(r.abs_error)]
            if not errs:
                raise InputError(f"all {k} trials failed at n_tr={n}")
            medians[k][n] = float(np.median(errs))
    return ComparisonResult(
        n_grid=n_grid, estimators=list(estimators), medians=medians,
        records=records,
    )


def population_consistency_check(
    scenario: ShiftScenario,
    n: int,
    seed: int,
    tol: float = 1e-6,
) -> float:
    """Mean squared deviation of the solved weights from the true density
    ratio at the training points, with matched sample sizes."""
    rng = trial_rng(seed)
    X_tr = scenario.sample_train(rng, n)
    X_te = scenario.sample_test(rng, n)
    problem = assemble_qp(
        scenario.kernel, X_tr, X_te, scenario.B_true, compute_const=False
    )
    w = solve_kmm(problem, tol=tol)
    beta_true = scenario.beta(X_tr)
    return float(np.mean((w.beta - beta_true) ** 2))
