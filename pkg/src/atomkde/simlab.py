"""Seeded samplers, true-value oracles and the replication engine.

Mixture models are sampled through their latent form: a Bernoulli(pi) label
per observation picks the discrete component, continuous draws fill the rest.
Labels are returned alongside the data so oracle baselines can consume them.

Determinism contract: every result is a pure function of (spec, seed).  The
child generator for replication ``r`` at grid position ``i`` is
``default_rng(SeedSequence(seed, spawn_key=(i, r[, side])))`` (NumPy PCG64);
methods never consume randomness themselves, so adding or removing methods
does not shift any stream.  Summary tables are therefore byte-identical
across runs and across worker counts.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate

from .density import DensityEstimate, fit_kde_naive, fit_kde_unique
from .errors import ContractError
from .estimators import EstimatorConfig, estimate
from .functionals import (ClampCounter, FunctionalSpec, QuadratureConfig,
                          functional_from_flag)
from .kernels import bandwidth_from_flag, kernel_from_flag
from .sample import Dataset, TieRule

SPEC_SCHEMA_VERSION = 1
_TINY_FLOOR = 1e-300  # keeps analytic evaluations away from the numeric guard


# ---------------------------------------------------------------------------
# Continuous component specs
# ---------------------------------------------------------------------------

class StandardNormal:
    family = "standard_normal"
    dim = 1

    def sample(self, rng, size):
        return rng.standard_normal(size).reshape(-1, 1)

    def pdf(self, xs):
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        return np.exp(-0.5 * xs * xs) / math.sqrt(2.0 * math.pi)

    def cdf(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        return 0.5 * (1.0 + np.vectorize(math.erf)(xs / math.sqrt(2.0)))

    def support(self):
        return None  # unbounded

    def integration_range(self, span_factor: float = 4.0):
        return (-10.0, 10.0)

    def to_dict(self):
        return {"family": self.family}


class Uniform01:
    family = "uniform01"
    dim = 1

    def sample(self, rng, size):
        return rng.random(size).reshape(-1, 1)

    def pdf(self, xs):
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        return np.where((xs >= 0.0) & (xs <= 1.0), 1.0, 0.0)

    def cdf(self, xs):
        return np.clip(np.asarray(xs, dtype=np.float64), 0.0, 1.0)

    def support(self):
        return (0.0, 1.0)

    def integration_range(self, span_factor: float = 4.0):
        return (0.0, 1.0)

    def to_dict(self):
        return {"family": self.family}


class PolyDensity:
    """Density c0 + c1 t^k on [0, 1]; must integrate to 1 and stay >= 0.

    Sampling inverts the CDF c0 t + c1 t^(k+1)/(k+1) by bisection followed by
    a Newton polish, to absolute tolerance 1e-12.
    """

    family = "poly_density"
    dim = 1

    def __init__(self, c0: float, c1: float, k: int):
        self.c0, self.c1, self.k = float(c0), float(c1), int(k)
        if self.k < 1:
            raise ContractError("poly_density needs exponent k >= 1")
        total = self.c0 + self.c1 / (self.k + 1)
        if abs(total - 1.0) > 1e-12:
            raise ContractError(
                f"poly_density(c0={c0}, c1={c1}, k={k}) integrates to {total}, not 1"
            )
        if min(self.c0, self.c0 + self.c1) < 0:
            raise ContractError("poly_density is negative somewhere on [0, 1]")

    def pdf(self, xs):
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        inside = (xs >= 0.0) & (xs <= 1.0)
        return np.where(inside, self.c0 + self.c1 * np.clip(xs, 0, 1) ** self.k, 0.0)

    def cdf(self, xs):
        t = np.clip(np.asarray(xs, dtype=np.float64), 0.0, 1.0)
        return self.c0 * t + self.c1 * t ** (self.k + 1) / (self.k + 1)

    def _invert(self, u):
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        for _ in range(52):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        t = 0.5 * (lo + hi)
        for _ in range(3):  # Newton polish where the density is bounded away from 0
            d = self.pdf(t)
            step = np.where(d > 1e-8, (self.cdf(t) - u) / np.where(d > 1e-8, d, 1.0), 0.0)
            t = np.clip(t - step, 0.0, 1.0)
        return t

    def sample(self, rng, size):
        return self._invert(rng.random(size)).reshape(-1, 1)

    def support(self):
        return (0.0, 1.0)

    def integration_range(self, span_factor: float = 4.0):
        return (0.0, 1.0)

    def to_dict(self):
        return {"family": self.family, "c0": self.c0, "c1": self.c1, "k": self.k}


class BivariateStandardNormal:
    family = "bivariate_standard_normal"
    dim = 2

    def sample(self, rng, size):
        return rng.standard_normal((size, 2))

    def pdf(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs.reshape(1, -1)
        return np.exp(-0.5 * np.sum(xs * xs, axis=1)) / (2.0 * math.pi)

    def support(self):
        return None

    def to_dict(self):
        return {"family": self.family}


def continuous_from_dict(d: dict):
    fam = d["family"]
    if fam == "standard_normal":
        return StandardNormal()
    if fam == "uniform01":
        return Uniform01()
    if fam == "poly_density":
        return PolyDensity(d["c0"], d["c1"], d["k"])
    if fam == "bivariate_standard_normal":
        return BivariateStandardNormal()
    raise ContractError(f"unknown continuous family {fam!r}")


# ---------------------------------------------------------------------------
# Discrete component specs
# ---------------------------------------------------------------------------

class Binomial:
    family = "binomial"
    dim = 1

    def __init__(self, trials: int, p: float):
        if trials < 1 or not (0.0 < p < 1.0):
            raise ContractError("binomial needs trials >= 1 and p in (0, 1)")
        self.trials, self.p = int(trials), float(p)

    def sample(self, rng, size):
        return rng.binomial(self.trials, self.p, size).astype(np.float64).reshape(-1, 1)

    def support_values(self):
        return np.arange(self.trials + 1, dtype=np.float64)

    def pmf(self, ks):
        ks = np.asarray(ks)
        return np.array([math.comb(self.trials, int(k)) * self.p ** k
                         * (1 - self.p) ** (self.trials - k) for k in ks])

    def is_support(self, values):
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        return (v >= 0) & (v <= self.trials) & (np.abs(v - np.round(v)) == 0.0)

    def to_dict(self):
        return {"family": self.family, "trials": self.trials, "p": self.p}


class ScaledPoisson:
    """Poisson(lam) / divisor: a countable lattice of atoms."""

    family = "scaled_poisson"
    dim = 1

    def __init__(self, lam: float, divisor: float):
        if lam <= 0 or divisor <= 0:
            raise ContractError("scaled_poisson needs lam > 0 and divisor > 0")
        self.lam, self.divisor = float(lam), float(divisor)

    def sample(self, rng, size):
        return (rng.poisson(self.lam, size) / self.divisor).astype(np.float64).reshape(-1, 1)

    def is_support(self, values):
        v = np.asarray(values, dtype=np.float64).reshape(-1) * self.divisor
        return (v >= -1e-9) & (np.abs(v - np.round(v)) < 1e-9)

    def to_dict(self):
        return {"family": self.family, "lam": self.lam, "divisor": self.divisor}


class PoissonOnAxis:
    """Two-dimensional atoms (Z, 0) with Z ~ Poisson(lam)."""

    family = "poisson_on_axis"
    dim = 2

    def __init__(self, lam: float):
        if lam <= 0:
            raise ContractError("poisson_on_axis needs lam > 0")
        self.lam = float(lam)

    def sample(self, rng, size):
        z = rng.poisson(self.lam, size).astype(np.float64)
        return np.stack([z, np.zeros(size)], axis=1)

    def is_support(self, values):
        v = np.asarray(values, dtype=np.float64)
        return (np.abs(v[:, 1]) == 0.0) & (v[:, 0] >= 0) \
            & (np.abs(v[:, 0] - np.round(v[:, 0])) == 0.0)

    def to_dict(self):
        return {"family": self.family, "lam": self.lam}


def discrete_from_dict(d: dict):
    fam = d["family"]
    if fam == "binomial":
        return Binomial(d["trials"], d["p"])
    if fam == "scaled_poisson":
        return ScaledPoisson(d["lam"], d["divisor"])
    if fam == "poisson_on_axis":
        return PoissonOnAxis(d["lam"])
    raise ContractError(f"unknown discrete family {fam!r}")


# ---------------------------------------------------------------------------
# Mixture model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureSpec:
    pi: float
    continuous: object
    discrete: object

    def __post_init__(self):
        if not (0.0 <= self.pi < 1.0):
            raise ContractError(f"mixing proportion must lie in [0, 1), got {self.pi}")
        if self.continuous.dim != self.discrete.dim:
            raise ContractError("continuous and discrete components disagree on dimension")

    @property
    def dim(self):
        return self.continuous.dim

    def to_dict(self):
        return {"pi": self.pi, "continuous": self.continuous.to_dict(),
                "discrete": self.discrete.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "MixtureSpec":
        return MixtureSpec(float(d["pi"]), continuous_from_dict(d["continuous"]),
                           discrete_from_dict(d["discrete"]))


def sample_mixture(spec: MixtureSpec, n: int, seed) -> tuple[Dataset, np.ndarray]:
    """Draw n observations; returns (data, labels) with label 1 = discrete.

    Draw order is pinned for reproducibility: labels first, then the
    continuous block, then the discrete block.
    """
    if n < 0:
        raise ContractError("sample size must be nonnegative")
    rng = np.random.default_rng(seed)
    labels = (rng.random(n) < spec.pi).astype(np.intp)
    n_disc = int(labels.sum())
    values = np.empty((n, spec.dim))
    if n - n_disc:
        values[labels == 0] = spec.continuous.sample(rng, n - n_disc)
    if n_disc:
        values[labels == 1] = spec.discrete.sample(rng, n_disc)
    return Dataset(values), labels


# ---------------------------------------------------------------------------
# True values and error metrics
# ---------------------------------------------------------------------------

def _quad_range(f_spec, g_spec=None):
    sup_f = f_spec.support()
    sup_g = g_spec.support() if g_spec is not None else sup_f
    if sup_f is None or sup_g is None:
        return -np.inf, np.inf
    return min(sup_f[0], sup_g[0]), max(sup_f[1], sup_g[1])


def true_value(T: FunctionalSpec, f_spec, g_spec=None) -> float:
    """Reference value of T at analytic densities.

    Closed forms where they exist, otherwise adaptive quadrature at 1e-10
    relative tolerance on the analytic pdfs.
    """
    if T.arity == 1 and T.name == "entropy":
        if isinstance(f_spec, Uniform01):
            return 0.0
        if isinstance(f_spec, StandardNormal):
            return 0.5 * math.log(2.0 * math.pi * math.e)
    if T.arity == 1 and T.name == "quadratic":
        if isinstance(f_spec, Uniform01):
            return 1.0
        if isinstance(f_spec, StandardNormal):
            return 1.0 / (2.0 * math.sqrt(math.pi))
    counter = ClampCounter()
    lo, hi = _quad_range(f_spec, g_spec)
    if T.arity == 1:
        fn = lambda x: float(T.nu(f_spec.pdf(np.array([x])), _TINY_FLOOR, counter)[0])
    else:
        fn = lambda x: float(T.nu(f_spec.pdf(np.array([x])), g_spec.pdf(np.array([x])),
                                  _TINY_FLOOR, counter)[0])
    integral, _ = integrate.quad(fn, lo, hi, epsabs=1e-13, epsrel=1e-10, limit=300)
    return float(T.phi(integral, _TINY_FLOOR, counter))


def miae(est, f_spec, box, grid_points: int) -> float:
    """Trapezoid L1 distance between an estimate and an analytic density.

    ``est`` is anything with a vectorized ``pdf``; ``box`` is (lo, hi) for
    d = 1 or a per-dimension list of ranges for d = 2.
    """
    if grid_points < 2:
        raise ContractError("miae needs at least 2 grid points")
    box = np.asarray(box, dtype=np.float64)
    if box.ndim == 1:
        box = box.reshape(1, 2)
    d = box.shape[0]
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in box]
    if d == 1:
        xs = axes[0].reshape(-1, 1)
        diff = np.abs(np.asarray(est.pdf(xs)).reshape(-1)
                      - np.asarray(f_spec.pdf(xs)).reshape(-1))
        return float(np.trapezoid(diff, axes[0]))
    if d == 2:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        diff = np.abs(np.asarray(est.pdf(pts)).reshape(grid_points, grid_points)
                      - np.asarray(f_spec.pdf(pts)).reshape(grid_points, grid_points))
        return float(np.trapezoid(np.trapezoid(diff, axes[1], axis=1), axes[0]))
    raise ContractError("miae supports d in {1, 2}")


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

DENSITY_METHODS = ("kde", "naive_kde", "oracle_kde")


@dataclass(frozen=True)
class ExperimentSpec:
    """A full experiment: model(s), functional or density metric, methods,
    n grid, replication count and master seed."""

    name: str
    kind: str                      # "functional" | "density"
    model: MixtureSpec
    methods: tuple
    n_grid: tuple
    reps: int
    seed: int
    functional: str | None = None  # grammar of functional_from_flag
    model2: MixtureSpec | None = None
    kernel: str = "gaussian"
    bandwidth: str = "silverman"
    quad: dict = field(default_factory=dict)
    box: tuple = (-5.0, 5.0)       # density kind: L1 window
    grid_points: int = 2001

    def __post_init__(self):
        if self.kind not in ("functional", "density"):
            raise ContractError(f"unknown experiment kind {self.kind!r}")
        if self.reps < 1:
            raise ContractError("reps must be >= 1")
        if self.kind == "functional" and self.functional is None:
            raise ContractError("functional experiments need a functional")

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            kernel=kernel_from_flag(self.kernel),
            bw=bandwidth_from_flag(self.bandwidth),
            tie_rule=TieRule.exact(),
            quad=QuadratureConfig(**self.quad) if self.quad else QuadratureConfig(),
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": SPEC_SCHEMA_VERSION,
            "name": self.name,
            "kind": self.kind,
            "functional": self.functional,
            "model": self.model.to_dict(),
            "model2": self.model2.to_dict() if self.model2 else None,
            "methods": list(self.methods),
            "n_grid": list(self.n_grid),
            "reps": self.reps,
            "seed": self.seed,
            "kernel": self.kernel,
            "bandwidth": self.bandwidth,
            "quad": dict(self.quad),
            "box": np.asarray(self.box, dtype=np.float64).tolist(),
            "grid_points": self.grid_points,
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentSpec":
        return ExperimentSpec(
            name=d.get("name", "experiment"),
            kind=d.get("kind", "functional"),
            functional=d.get("functional"),
            model=MixtureSpec.from_dict(d["model"]),
            model2=MixtureSpec.from_dict(d["model2"]) if d.get("model2") else None,
            methods=tuple(d["methods"]),
            n_grid=tuple(int(v) for v in d["n_grid"]),
            reps=int(d["reps"]),
            seed=int(d["seed"]),
            kernel=d.get("kernel", "gaussian"),
            bandwidth=d.get("bandwidth", "silverman"),
            quad=d.get("quad") or {},
            box=_box_tuple(d.get("box", (-5.0, 5.0))),
            grid_points=int(d.get("grid_points", 2001)),
        )

    @staticmethod
    def from_json_file(path) -> "ExperimentSpec":
        with open(path) as fh:
            return ExperimentSpec.from_dict(json.load(fh))


@dataclass
class SummaryTable:
    """Per (method, n) mean absolute error over replications, plus rate slopes."""

    methods: tuple
    n_grid: tuple
    mae: dict        # method -> ndarray over n_grid
    sd: dict
    reps: int
    slopes: dict     # method -> float | None
    spec_echo: dict
    digests: dict    # (n, rep) -> sha256 hex of the sampled data

    def to_csv(self) -> str:
        lines = ["method,n,mae,sd,reps"]
        for method in self.methods:
            for i, n in enumerate(self.n_grid):
                lines.append(f"{method},{n},{self.mae[method][i]!r},"
                             f"{self.sd[method][i]!r},{self.reps}")
        return "\n".join(lines) + "\n"

    def sidecar_dict(self) -> dict:
        return {
            "schema_version": SPEC_SCHEMA_VERSION,
            "slopes": {m: self.slopes[m] for m in self.methods},
            "config": self.spec_echo,
        }


def _box_tuple(box):
    arr = np.asarray(box, dtype=np.float64)
    if arr.ndim == 1:
        return tuple(arr)
    return tuple(tuple(row) for row in arr)


def _child_seed(master: int, n_index: int, rep: int, side: int | None = None):
    key = (n_index, rep) if side is None else (n_index, rep, side)
    return np.random.SeedSequence(entropy=master, spawn_key=key)


def _digest(*arrays) -> str:
    acc = hashlib.sha256()
    for arr in arrays:
        acc.update(np.ascontiguousarray(arr).tobytes())
    return acc.hexdigest()


def _density_rep(spec: ExperimentSpec, n_index: int, rep: int):
    n = spec.n_grid[n_index]
    data, labels = sample_mixture(spec.model, n, _child_seed(spec.seed, n_index, rep))
    cfg = spec.estimator_config()
    box = np.asarray(spec.box, dtype=np.float64).reshape(-1, 2) \
        if np.asarray(spec.box).ndim > 1 or spec.model.dim > 1 else spec.box
    errors = {}
    for method in spec.methods:
        if method == "kde":
            est = fit_kde_unique(data, cfg.tie_rule, cfg.kernel, cfg.bw)
        elif method == "naive_kde":
            est = fit_kde_naive(data, cfg.kernel, cfg.bw)
        elif method == "oracle_kde":
            est = fit_kde_naive(Dataset(data.values[labels == 0]), cfg.kernel, cfg.bw)
        else:
            raise ContractError(f"unknown density method {method!r}")
        errors[method] = miae(est, spec.model.continuous, box, spec.grid_points)
    return errors, _digest(data.values, labels)


def _functional_rep(spec: ExperimentSpec, n_index: int, rep: int):
    n = spec.n_grid[n_index]
    T = functional_from_flag(spec.functional)
    cfg = spec.estimator_config()
    if T.arity == 1:
        data, labels = sample_mixture(spec.model, n, _child_seed(spec.seed, n_index, rep))
        data2 = labels2 = None
        digest = _digest(data.values, labels)
        target = true_value(T, spec.model.continuous)
    else:
        if spec.model2 is None:
            raise ContractError("two-sample functional experiments need model2")
        data, labels = sample_mixture(spec.model, n,
                                      _child_seed(spec.seed, n_index, rep, 0))
        data2, labels2 = sample_mixture(spec.model2, n,
                                        _child_seed(spec.seed, n_index, rep, 1))
        digest = _digest(data.values, labels, data2.values, labels2)
        target = true_value(T, spec.model.continuous, spec.model2.continuous)
    errors = {}
    for method in spec.methods:
        rep_out = estimate(method, data, T, cfg, data2=data2,
                           labels=labels, labels2=labels2)
        errors[method] = abs(rep_out.value - target)
    return errors, digest


def run_experiment(spec: ExperimentSpec, n_jobs: int = 1) -> SummaryTable:
    """Run every method on the same per-rep samples and aggregate MAE.

    Replications are independent; with ``n_jobs`` > 1 they run in separate
    processes and results are placed by (n, rep) index, so the table is
    identical whatever the worker count.
    """
    worker = _density_rep if spec.kind == "density" else _functional_rep
    tasks = [(i, r) for i in range(len(spec.n_grid)) for r in range(spec.reps)]
    if n_jobs == 1:
        outputs = [worker(spec, i, r) for i, r in tasks]
    else:
        outputs = Parallel(n_jobs=n_jobs)(delayed(worker)(spec, i, r) for i, r in tasks)

    err = {m: np.zeros((len(spec.n_grid), spec.reps)) for m in spec.methods}
    digests = {}
    for (i, r), (errors, digest) in zip(tasks, outputs):
        for m in spec.methods:
            err[m][i, r] = errors[m]
        digests[(spec.n_grid[i], r)] = digest

    mae = {m: err[m].mean(axis=1) for m in spec.methods}
    sd = {m: (err[m].std(axis=1, ddof=1) if spec.reps > 1
              else np.zeros(len(spec.n_grid))) for m in spec.methods}
    table = SummaryTable(methods=tuple(spec.methods), n_grid=tuple(spec.n_grid),
                         mae=mae, sd=sd, reps=spec.reps, slopes={},
                         spec_echo=spec.to_dict(), digests=digests)
    for m in spec.methods:
        table.slopes[m] = rate_fit(table, m) if len(spec.n_grid) >= 3 else None
    return table


def rate_fit(table: SummaryTable, method: str) -> float:
    """Least-squares slope of log(MAE) against log(n)."""
    if method not in table.mae:
        raise ContractError(f"method {method!r} not present in the table")
    if len(table.n_grid) < 3:
        raise ContractError("rate fit needs at least 3 sample sizes")
    x = np.log(np.asarray(table.n_grid, dtype=np.float64))
    y = np.log(np.maximum(np.asarray(table.mae[method]), 1e-300))
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def trend_pvalue(xs, ys) -> tuple[float, float]:
    """Exact one-sided Spearman test for a decreasing trend.

    Returns (rho, p) where p is the exact permutation probability of a rank
    correlation at most as small as observed; only practical for small grids
    (n <= 8)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n = xs.size
    if n < 3 or n > 8:
        raise ContractError("exact trend test supports 3..8 points")

    def rho_of(rank_x, rank_y):
        d = rank_x - rank_y
        return 1.0 - 6.0 * float(d @ d) / (n * (n * n - 1))

    rank_x = np.argsort(np.argsort(xs)).astype(np.float64)
    rank_y = np.argsort(np.argsort(ys)).astype(np.float64)
    observed = rho_of(rank_x, rank_y)
    count = 0
    total = 0
    for perm in permutations(range(n)):
        total += 1
        if rho_of(rank_x, np.asarray(perm, dtype=np.float64)) <= observed + 1e-12:
            count += 1
    return observed, count / total
