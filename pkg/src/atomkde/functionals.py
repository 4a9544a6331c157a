"""Density functionals of the form T = phi(integral of nu(f) [or nu(f, g)]).

Each built-in ships its analytic influence function, i.e. the Gateaux
derivative of T at the distribution toward a point mass,

    psi(x; F) = d/dt T((1 - t) F + t delta_x) |_{t=0},

which is the first-order correction the data-splitting and leave-one-out
estimators average.  A finite-difference oracle (`influence_fd`) approximates
the same derivative with a narrow normalized bump in place of delta_x, so
user-supplied influence functions can be validated numerically.

Quadrature is composite Simpson on the padded data range, refined by grid
doubling until the relative change falls below tolerance.  Densities are
evaluated as-is; a floor of ``density_floor`` is applied only inside logs and
negative powers, and every floored evaluation is counted so reports can
surface how much of a result leaned on the guard.  The convention
0 * log 0 = 0 is applied exactly (it is a limit, not a clamp, and is not
counted).  Quadrature supports d = 1 only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

__all__ = [
    "QuadratureConfig", "ClampCounter", "FunctionalSpec",
    "ShannonEntropy", "Quadratic", "RenyiDivergence", "KLDivergence",
    "CrossQuadratic", "SHANNON_ENTROPY", "QUADRATIC", "KL_DIVERGENCE",
    "CROSS_QUADRATIC", "renyi_divergence", "functional_from_flag",
    "evaluate_functional", "evaluate_functional_full", "influence",
    "influence_fd", "taylor_residual", "simpson_weights", "refine_integral",
    "GaussianBump",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite-Simpson settings shared by all functional evaluations."""

    span_factor: float = 4.0       # kernel-radii of padding beyond the data range
    initial_points: int = 2049     # odd
    refine_tolerance: float = 1e-6
    max_doublings: int = 6
    density_floor: float = 1e-12

    def __post_init__(self):
        if self.span_factor <= 0 or self.refine_tolerance <= 0 \
                or self.density_floor <= 0 or self.max_doublings < 0:
            raise ContractError("quadrature parameters must be positive")
        if self.initial_points < 3 or self.initial_points % 2 == 0:
            raise ContractError("initial_points must be odd and >= 3")


DEFAULT_QUADRATURE = QuadratureConfig()


class ClampCounter:
    """Counts density evaluations that hit the floor inside logs/powers."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, k: int):
        self.count += int(k)


def _pos_part(vals: np.ndarray, counter: ClampCounter) -> np.ndarray:
    # negative densities (possible under higher-order kernels) are clamped to
    # zero before entering a positive power or t*log(t)
    bad = vals < 0.0
    n_bad = int(np.count_nonzero(bad))
    if n_bad:
        counter.add(n_bad)
        return np.where(bad, 0.0, vals)
    return vals


def _floored(vals: np.ndarray, eps: float, counter: ClampCounter) -> np.ndarray:
    bad = vals < eps
    n_bad = int(np.count_nonzero(bad))
    if n_bad:
        counter.add(n_bad)
        return np.maximum(vals, eps)
    return vals


def _xlogx(vals: np.ndarray) -> np.ndarray:
    vals = np.asarray(vals, dtype=np.float64)
    safe = np.where(vals > 0.0, vals, 1.0)
    return np.where(vals > 0.0, vals * np.log(safe), 0.0)


# ---------------------------------------------------------------------------
# Functional definitions
# ---------------------------------------------------------------------------

class FunctionalSpec:
    """Base class: T = phi(int nu) with analytic influence function(s).

    Subclasses provide ``nu`` (the integrand as a function of the density
    values), ``phi`` with its derivative, and the influence function(s)
    expressed in terms of the density value(s) at the evaluation point and the
    raw integral I = int nu.
    """

    name: str = ""
    arity: int = 1

    def nu(self, fx, eps, counter):
        raise NotImplementedError

    def phi(self, integral: float, eps: float, counter: ClampCounter) -> float:
        raise NotImplementedError

    def phi_prime(self, integral: float, eps: float, counter: ClampCounter) -> float:
        raise NotImplementedError

    def psi(self, fx, integral, eps, counter):
        raise NotImplementedError

    def __repr__(self):
        return f"<functional {self.name}>"


class OneSampleFunctional(FunctionalSpec):
    arity = 1


class TwoSampleFunctional(FunctionalSpec):
    arity = 2

    def nu(self, fx, gx, eps, counter):
        raise NotImplementedError

    def psi_f(self, fx, gx, integral, eps, counter):
        raise NotImplementedError

    def psi_g(self, fx, gx, integral, eps, counter):
        raise NotImplementedError


class ShannonEntropy(OneSampleFunctional):
    """T(f) = -int f log f;  psi(x) = -log f(x) - T(f)."""

    name = "entropy"

    def nu(self, fx, eps, counter):
        return _xlogx(_pos_part(fx, counter))

    def phi(self, integral, eps, counter):
        return -integral

    def phi_prime(self, integral, eps, counter):
        return -1.0

    def psi(self, fx, integral, eps, counter):
        t_value = -integral
        return -np.log(_floored(np.asarray(fx, dtype=np.float64), eps, counter)) - t_value


class Quadratic(OneSampleFunctional):
    """T(f) = int f^2;  psi(x) = 2 f(x) - 2 T(f)."""

    name = "quadratic"

    def nu(self, fx, eps, counter):
        return np.square(fx)

    def phi(self, integral, eps, counter):
        return integral

    def phi_prime(self, integral, eps, counter):
        return 1.0

    def psi(self, fx, integral, eps, counter):
        return 2.0 * np.asarray(fx, dtype=np.float64) - 2.0 * integral


class RenyiDivergence(TwoSampleFunctional):
    """T(f, g) = log(int f^a g^(1-a)) / (a - 1) for a > 0, a != 1.

    With I the raw integral, the influence functions come out as
      psi_f(x) = a/(a-1) * (f(x)^(a-1) g(x)^(1-a) / I - 1)
      psi_g(x) = 1 - f(x)^a g(x)^(-a) / I
    (both centered: int psi_f f = int psi_g g = 0).
    """

    def __init__(self, alpha: float):
        if not (alpha > 0) or alpha == 1.0:
            raise ContractError(f"Renyi order must be positive and != 1, got {alpha}")
        self.alpha = float(alpha)
        self.name = f"renyi:{alpha:g}"

    def _pow(self, vals, expo, eps, counter):
        vals = np.asarray(vals, dtype=np.float64)
        if expo >= 0:
            return np.power(_pos_part(vals, counter), expo)
        return np.power(_floored(vals, eps, counter), expo)

    def nu(self, fx, gx, eps, counter):
        a = self.alpha
        return self._pow(fx, a, eps, counter) * self._pow(gx, 1.0 - a, eps, counter)

    def phi(self, integral, eps, counter):
        i_val = _floored(np.asarray(integral, dtype=np.float64), eps, counter)
        return np.log(i_val) / (self.alpha - 1.0)

    def phi_prime(self, integral, eps, counter):
        i_val = _floored(np.asarray(integral, dtype=np.float64), eps, counter)
        return 1.0 / ((self.alpha - 1.0) * i_val)

    def psi_f(self, fx, gx, integral, eps, counter):
        a = self.alpha
        i_val = _floored(np.asarray(integral, dtype=np.float64), eps, counter)
        ratio = self._pow(fx, a - 1.0, eps, counter) * self._pow(gx, 1.0 - a, eps, counter)
        return (a / (a - 1.0)) * (ratio / i_val - 1.0)

    def psi_g(self, fx, gx, integral, eps, counter):
        a = self.alpha
        i_val = _floored(np.asarray(integral, dtype=np.float64), eps, counter)
        ratio = self._pow(fx, a, eps, counter) * self._pow(gx, -a, eps, counter)
        return 1.0 - ratio / i_val


class KLDivergence(TwoSampleFunctional):
    """T(f, g) = int f log(f/g);  psi_f = log(f/g) - T,  psi_g = 1 - f/g."""

    name = "kl"

    def nu(self, fx, gx, eps, counter):
        fx = _pos_part(np.asarray(fx, dtype=np.float64), counter)
        out = np.zeros_like(fx)
        pos = fx > 0.0
        if np.any(pos):
            g_pos = _floored(np.asarray(gx, dtype=np.float64)[pos], eps, counter)
            out[pos] = fx[pos] * (np.log(fx[pos]) - np.log(g_pos))
        return out

    def phi(self, integral, eps, counter):
        return integral

    def phi_prime(self, integral, eps, counter):
        return 1.0

    def psi_f(self, fx, gx, integral, eps, counter):
        fx = _floored(np.asarray(fx, dtype=np.float64), eps, counter)
        gx = _floored(np.asarray(gx, dtype=np.float64), eps, counter)
        return np.log(fx / gx) - integral

    def psi_g(self, fx, gx, integral, eps, counter):
        fx = np.asarray(fx, dtype=np.float64)
        gx = _floored(np.asarray(gx, dtype=np.float64), eps, counter)
        return 1.0 - fx / gx


class CrossQuadratic(TwoSampleFunctional):
    """T(f, g) = int f g;  psi_f = g(x) - T,  psi_g = f(x) - T.

    Mostly useful as a closed-form test target for the two-sample estimators.
    """

    name = "cross_quadratic"

    def nu(self, fx, gx, eps, counter):
        return np.asarray(fx, dtype=np.float64) * np.asarray(gx, dtype=np.float64)

    def phi(self, integral, eps, counter):
        return integral

    def phi_prime(self, integral, eps, counter):
        return 1.0

    def psi_f(self, fx, gx, integral, eps, counter):
        return np.asarray(gx, dtype=np.float64) - integral

    def psi_g(self, fx, gx, integral, eps, counter):
        return np.asarray(fx, dtype=np.float64) - integral


SHANNON_ENTROPY = ShannonEntropy()
QUADRATIC = Quadratic()
KL_DIVERGENCE = KLDivergence()
CROSS_QUADRATIC = CrossQuadratic()


def renyi_divergence(alpha: float) -> RenyiDivergence:
    return RenyiDivergence(alpha)


def functional_from_flag(text: str) -> FunctionalSpec:
    """Parse ``entropy | quadratic | renyi:ALPHA | kl``."""
    t = text.strip().lower()
    if t == "entropy":
        return SHANNON_ENTROPY
    if t == "quadratic":
        return QUADRATIC
    if t == "kl":
        return KL_DIVERGENCE
    if t.startswith("renyi:"):
        try:
            return RenyiDivergence(float(t.split(":", 1)[1]))
        except ValueError:
            raise ContractError(f"bad Renyi order in {text!r}") from None
    raise ContractError(f"unknown functional {text!r}")


# ---------------------------------------------------------------------------
# Quadrature engine
# ---------------------------------------------------------------------------

def simpson_weights(n_points: int, dx: float) -> np.ndarray:
    if n_points < 3 or n_points % 2 == 0:
        raise ContractError("composite Simpson needs an odd number of points >= 3")
    w = np.ones(n_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (dx / 3.0)


@dataclass
class IntegralResult:
    value: float
    xs: np.ndarray
    weights: np.ndarray
    converged: bool
    levels: int


def refine_integral(fn, lo: float, hi: float, q: QuadratureConfig) -> IntegralResult:
    """Composite Simpson with grid doubling until the value stabilizes.

    ``fn`` maps a grid of points to integrand values; previously evaluated
    points are reused at each doubling.  Non-convergence within
    ``max_doublings`` is reported through the ``converged`` flag rather than
    raised.
    """
    if not (hi > lo):
        raise ContractError(f"bad integration range [{lo}, {hi}]")
    xs = np.linspace(lo, hi, q.initial_points)
    vals = np.asarray(fn(xs), dtype=np.float64)
    dx = (hi - lo) / (q.initial_points - 1)
    value = float(simpson_weights(xs.size, dx) @ vals)
    converged = False
    levels = 0
    for _ in range(q.max_doublings):
        mids = (xs[:-1] + xs[1:]) / 2.0
        mid_vals = np.asarray(fn(mids), dtype=np.float64)
        new_xs = np.empty(xs.size + mids.size)
        new_vals = np.empty_like(new_xs)
        new_xs[0::2], new_xs[1::2] = xs, mids
        new_vals[0::2], new_vals[1::2] = vals, mid_vals
        xs, vals, dx = new_xs, new_vals, dx / 2.0
        levels += 1
        new_value = float(simpson_weights(xs.size, dx) @ vals)
        if abs(new_value - value) <= q.refine_tolerance * max(abs(new_value), 1e-300):
            value = new_value
            converged = True
            break
        value = new_value
    return IntegralResult(value, xs, simpson_weights(xs.size, dx), converged, levels)


def _union_range(q: QuadratureConfig, *densities):
    lo = hi = None
    for d in densities:
        if d is None:
            continue
        rng = d.integration_range(q.span_factor)
        if rng is None:
            continue
        lo = rng[0] if lo is None else min(lo, rng[0])
        hi = rng[1] if hi is None else max(hi, rng[1])
    if lo is None:
        return None
    return lo, hi


@dataclass
class FunctionalEvaluation:
    value: float
    integral: float
    clamp_count: int
    converged: bool
    domain: tuple | None
    xs: np.ndarray | None = None
    weights: np.ndarray | None = None
    warnings: list = field(default_factory=list)


def evaluate_functional_full(T: FunctionalSpec, f, g=None,
                             q: QuadratureConfig = DEFAULT_QUADRATURE) -> FunctionalEvaluation:
    """Evaluate T with diagnostics (integral, clamp count, convergence)."""
    if T.arity == 1 and g is not None:
        raise ContractError(f"{T.name} takes one distribution")
    if T.arity == 2 and g is None:
        raise ContractError(f"{T.name} takes two distributions")
    counter = ClampCounter()
    domain = _union_range(q, f, g)
    if domain is None:
        # zero density everywhere: the integral is 0 and phi is applied to it
        value = float(T.phi(0.0, q.density_floor, counter))
        return FunctionalEvaluation(value, 0.0, counter.count, True, None,
                                    warnings=["evaluated on an empty (zero) density"])

    if T.arity == 1:
        fn = lambda xs: T.nu(f.pdf(xs), q.density_floor, counter)
    else:
        fn = lambda xs: T.nu(f.pdf(xs), g.pdf(xs), q.density_floor, counter)
    res = refine_integral(fn, domain[0], domain[1], q)
    value = float(T.phi(res.value, q.density_floor, counter))
    warnings = []
    if not res.converged:
        warnings.append(
            f"quadrature did not reach rel. tolerance {q.refine_tolerance:g} "
            f"within {q.max_doublings} doublings"
        )
    return FunctionalEvaluation(value, res.value, counter.count, res.converged,
                                domain, res.xs, res.weights, warnings)


def evaluate_functional(T: FunctionalSpec, f, g=None,
                        q: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """T applied to one or two densities (estimates or analytic)."""
    return evaluate_functional_full(T, f, g, q).value


def influence(T: FunctionalSpec, x, f, g=None,
              q: QuadratureConfig = DEFAULT_QUADRATURE):
    """Analytic influence function at ``x``.

    Returns a float (or a pair of floats for two-distribution functionals);
    array input is mapped elementwise.
    """
    ev = evaluate_functional_full(T, f, g, q)
    counter = ClampCounter()
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    scalar = np.ndim(x) == 0
    fx = f.pdf(xs)
    if T.arity == 1:
        out = T.psi(fx, ev.integral, q.density_floor, counter)
        return float(out[0]) if scalar else out
    gx = g.pdf(xs)
    out_f = T.psi_f(fx, gx, ev.integral, q.density_floor, counter)
    out_g = T.psi_g(fx, gx, ev.integral, q.density_floor, counter)
    if scalar:
        return float(out_f[0]), float(out_g[0])
    return out_f, out_g


# ---------------------------------------------------------------------------
# Finite-difference Gateaux oracle
# ---------------------------------------------------------------------------

class GaussianBump:
    """A normalized narrow Gaussian standing in for a point mass at x0."""

    def __init__(self, x0: float, sigma: float):
        if sigma <= 0:
            raise ContractError("bump width must be positive")
        self.x0 = float(x0)
        self.sigma = float(sigma)

    def pdf(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        z = (xs - self.x0) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    def integration_range(self, span_factor: float = 4.0):
        return (self.x0 - 10.0 * self.sigma, self.x0 + 10.0 * self.sigma)


class _Perturbed:
    """(1 - t) * base + t * bump, as a density-like object."""

    def __init__(self, base, bump, t):
        self.base, self.bump, self.t = base, bump, t

    def pdf(self, xs):
        return (1.0 - self.t) * self.base.pdf(xs) + self.t * self.bump.pdf(xs)

    def integration_range(self, span_factor: float = 4.0):
        a = self.base.integration_range(span_factor)
        b = self.bump.integration_range(span_factor)
        if a is None:
            return b
        return (min(a[0], b[0]), max(a[1], b[1]))


def influence_fd(T: FunctionalSpec, x, f, g=None, t: float = 1e-5,
                 bump_width: float = 1e-3,
                 q: QuadratureConfig = DEFAULT_QUADRATURE):
    """Finite-difference Gateaux derivative (T((1-t)f + t b_x) - T(f)) / t.

    ``b_x`` is a normalized Gaussian bump of width ``bump_width`` at ``x``.
    Convergence to the influence function is two-stage: shrink the bump first
    (smearing bias is O(bump_width^2)), then the step (remainder is O(t),
    and the leading O(t) coefficient grows like 1/bump_width for quadratic-
    type functionals; a two-step Richardson combination
    2*fd(t/2) - fd(t) removes it).  Both T values are computed on the same
    refined grid so shared quadrature error cancels in the difference.

    Returns a float for one-distribution functionals, or the pair of f- and
    g-side derivatives for two-distribution ones.
    """
    if not (0.0 < t < 1.0):
        raise ContractError("step t must lie in (0, 1)")
    bump = GaussianBump(float(x), bump_width)

    def quotient(base_f, base_g, perturb_g: bool):
        mixed = _Perturbed(base_g if perturb_g else base_f, bump, t)
        dens_f = base_f if perturb_g else mixed
        dens_g = mixed if perturb_g else base_g
        domain = _union_range(q, dens_f, dens_g)
        if domain is None:
            raise ContractError("finite-difference oracle needs a non-empty density")
        counter = ClampCounter()
        if T.arity == 1:
            fn = lambda xs: np.stack([T.nu(dens_f.pdf(xs), q.density_floor, counter),
                                      T.nu(base_f.pdf(xs), q.density_floor, counter)])
        else:
            fn = lambda xs: np.stack([
                T.nu(dens_f.pdf(xs), dens_g.pdf(xs), q.density_floor, counter),
                T.nu(base_f.pdf(xs), base_g.pdf(xs), q.density_floor, counter),
            ])

        # refine until the difference quotient itself stabilizes
        lo, hi = domain
        xs = np.linspace(lo, hi, q.initial_points)
        vals = np.asarray(fn(xs), dtype=np.float64)
        dx = (hi - lo) / (q.initial_points - 1)
        w = simpson_weights(xs.size, dx)
        eps = q.density_floor
        quot = (float(T.phi(w @ vals[0], eps, counter))
                - float(T.phi(w @ vals[1], eps, counter))) / t
        for _ in range(q.max_doublings):
            mids = (xs[:-1] + xs[1:]) / 2.0
            mid_vals = np.asarray(fn(mids), dtype=np.float64)
            new_xs = np.empty(xs.size + mids.size)
            new_vals = np.empty((2, new_xs.size))
            new_xs[0::2], new_xs[1::2] = xs, mids
            new_vals[:, 0::2], new_vals[:, 1::2] = vals, mid_vals
            xs, vals, dx = new_xs, new_vals, dx / 2.0
            w = simpson_weights(xs.size, dx)
            new_quot = (float(T.phi(w @ vals[0], eps, counter))
                        - float(T.phi(w @ vals[1], eps, counter))) / t
            if abs(new_quot - quot) <= q.refine_tolerance * max(1.0, abs(new_quot)):
                return new_quot
            quot = new_quot
        return quot

    if T.arity == 1:
        return quotient(f, None, perturb_g=False)
    return (quotient(f, g, perturb_g=False), quotient(f, g, perturb_g=True))


def taylor_residual(T: FunctionalSpec, f, g,
                    q: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """| T(f) - T(g) - int psi(u; g) f(u) du |, the first-order expansion
    remainder.  Defined for one-distribution functionals; it is O(||f - g||^2)
    for smooth T, and exactly int (f - g)^2 for the quadratic functional."""
    if T.arity != 1:
        raise ContractError("taylor_residual expects a one-distribution functional")
    ev_f = evaluate_functional_full(T, f, q=q)
    ev_g = evaluate_functional_full(T, g, q=q)
    domain = _union_range(q, f, g)
    if domain is None:
        return 0.0
    counter = ClampCounter()

    def fn(xs):
        return T.psi(g.pdf(xs), ev_g.integral, q.density_floor, counter) * f.pdf(xs)

    cross = refine_integral(fn, domain[0], domain[1], q)
    return abs(ev_f.value - ev_g.value - cross.value)
