# Kernel families and bandwidth rules.
# Conventions:
#   - every kernel is symmetric with unit integral;
#   - compact families live on [-support_radius, support_radius];
#   - the Gaussian has unbounded support; for integration-domain padding its
#     span_radius is 2.0, so the default span factor of 4 pads by 8 standard
#     deviations (mass beyond that is < 1e-15);
#   - bias-reduction kernels of even order ell >= 4 are polynomials on [-1, 1]
#     built from a Legendre expansion; their moments 1..ell-1 vanish.

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from .errors import ContractError, DegenerateDataError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class KernelSpec:
    """A univariate kernel; multivariate use is by coordinate product."""

    family: str
    support_radius: float          # inf for gaussian
    order: int                     # smallest nonzero moment index
    coeffs: tuple = ()             # Legendre coefficients, higher-order only

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if self.family == "gaussian":
            return np.exp(-0.5 * u * u) / _SQRT_2PI
        if self.family == "epanechnikov":
            return 0.75 * np.maximum(0.0, 1.0 - u * u)
        if self.family == "rectangular":
            return np.where(np.abs(u) <= 1.0, 0.5, 0.0)
        # polynomial higher-order kernel on [-1, 1]
        inside = np.abs(u) <= 1.0
        vals = npleg.legval(np.clip(u, -1.0, 1.0), np.asarray(self.coeffs))
        return np.where(inside, vals, 0.0)

    @property
    def at_zero(self) -> float:
        return float(self(0.0))

    @property
    def span_radius(self) -> float:
        """Radius used for integration-domain padding (see module header)."""
        return 2.0 if math.isinf(self.support_radius) else self.support_radius

    @property
    def nonnegative(self) -> bool:
        return self.family in ("gaussian", "epanechnikov", "rectangular")


GAUSSIAN = KernelSpec("gaussian", math.inf, 2)
EPANECHNIKOV = KernelSpec("epanechnikov", 1.0, 2)
RECTANGULAR = KernelSpec("rectangular", 1.0, 2)


def eval_kernel(spec: KernelSpec, u) -> np.ndarray:
    """Evaluate the kernel at offset(s) u."""
    return spec(u)


def make_higher_order(ell: int) -> KernelSpec:
    """Build the order-``ell`` polynomial kernel on [-1, 1].

    The kernel is sum_{m < ell} phi_m(0) phi_m(u) with phi_m the orthonormal
    Legendre basis, which makes moments 1..ell-1 vanish while keeping the
    integral at 1.  Such kernels necessarily take negative values.  Moment
    residuals are re-checked exactly (polynomial integration) and construction
    fails loudly if they exceed tolerance.
    """
    if ell < 4 or ell % 2 != 0:
        raise ContractError(
            f"higher-order kernels need an even order >= 4, got {ell}; "
            "use a standard family for order 2"
        )
    coeffs = np.zeros(ell)
    for m in range(0, ell, 2):  # odd-m Legendre polynomials vanish at 0
        unit = np.zeros(m + 1)
        unit[m] = 1.0
        coeffs[m] = (2 * m + 1) / 2.0 * npleg.legval(0.0, unit)

    # exact moment check: integrate u^j * K(u) over [-1, 1]
    power = npleg.leg2poly(coeffs)
    for j in range(ell):
        mom = nppoly.polyint(np.concatenate([np.zeros(j), power]))
        value = nppoly.polyval(1.0, mom) - nppoly.polyval(-1.0, mom)
        target = 1.0 if j == 0 else 0.0
        tol = 1e-8 if j == 0 else 1e-6
        if abs(value - target) > tol:
            raise ContractError(
                f"order-{ell} kernel construction failed: moment {j} = {value:.3e}"
            )
    return KernelSpec("higher_order", 1.0, ell, tuple(coeffs))


# ---------------------------------------------------------------------------
# Bandwidth rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandwidthRule:
    """Silverman's rule, the rate-theoretic power rule, or a fixed value."""

    rule: str
    h: float | None = None
    alpha: float | None = None
    s: float | None = None
    d: int | None = None

    @staticmethod
    def silverman() -> "BandwidthRule":
        return BandwidthRule("silverman")

    @staticmethod
    def fixed(h: float) -> "BandwidthRule":
        if not (h > 0 and math.isfinite(h)):
            raise ContractError(f"fixed bandwidth must be positive, got {h}")
        return BandwidthRule("fixed", h=float(h))

    @staticmethod
    def theoretical(alpha: float, s: float, d: int | None = None) -> "BandwidthRule":
        if alpha <= 0 or s < 1:
            raise ContractError("theoretical rule needs alpha > 0 and s >= 1")
        return BandwidthRule("theoretical", alpha=float(alpha), s=float(s), d=d)


def bandwidth(rule: BandwidthRule, unique_values: np.ndarray, n_reference: int) -> float:
    """Resolve a bandwidth rule against the values the estimate will sit on.

    For Silverman's rule sigma-hat is the sample standard deviation of
    ``unique_values`` (the mean of per-coordinate standard deviations when
    d > 1) and n_reference should be the number of those values, giving
    h = 1.06 * sigma_hat * n^(-1/5).  The power rule gives
    h = alpha * n^(-1/(2s+d)).
    """
    if rule.rule == "fixed":
        return rule.h
    if n_reference < 1:
        raise DegenerateDataError("bandwidth needs n_reference >= 1")
    if rule.rule == "theoretical":
        vals = np.asarray(unique_values, dtype=np.float64)
        d = rule.d if rule.d is not None else (vals.shape[1] if vals.ndim == 2 else 1)
        return rule.alpha * float(n_reference) ** (-1.0 / (2.0 * rule.s + d))
    if rule.rule == "silverman":
        vals = np.asarray(unique_values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if vals.shape[0] < 2:
            raise DegenerateDataError(
                "Silverman's rule needs at least two unique values; "
                "fall back to a fixed bandwidth"
            )
        sigma = float(np.mean(np.std(vals, axis=0, ddof=1)))
        if sigma <= 0:
            raise DegenerateDataError(
                "Silverman's rule is degenerate (zero spread); "
                "fall back to a fixed bandwidth"
            )
        return 1.06 * sigma * float(n_reference) ** (-0.2)
    raise ContractError(f"unknown bandwidth rule {rule.rule!r}")


# ---------------------------------------------------------------------------
# CLI flag grammar
# ---------------------------------------------------------------------------

def kernel_from_flag(text: str) -> KernelSpec:
    """Parse ``gaussian | epanechnikov | rectangular | order:L``."""
    t = text.strip().lower()
    named = {"gaussian": GAUSSIAN, "epanechnikov": EPANECHNIKOV,
             "rectangular": RECTANGULAR}
    if t in named:
        return named[t]
    if t.startswith("order:"):
        try:
            ell = int(t.split(":", 1)[1])
        except ValueError:
            raise ContractError(f"bad kernel order in {text!r}") from None
        return make_higher_order(ell)
    raise ContractError(f"unknown kernel {text!r}")


def bandwidth_from_flag(text: str) -> BandwidthRule:
    """Parse ``silverman | fixed:H | theory:ALPHA,S``."""
    t = text.strip().lower()
    if t == "silverman":
        return BandwidthRule.silverman()
    if t.startswith("fixed:"):
        try:
            return BandwidthRule.fixed(float(t.split(":", 1)[1]))
        except ValueError:
            raise ContractError(f"bad fixed bandwidth in {text!r}") from None
    if t.startswith("theory:"):
        try:
            alpha_s = t.split(":", 1)[1].split(",")
            alpha, s = float(alpha_s[0]), float(alpha_s[1])
        except (ValueError, IndexError):
            raise ContractError(f"bad theory bandwidth in {text!r}") from None
        return BandwidthRule.theoretical(alpha, s)
    raise ContractError(f"unknown bandwidth rule {text!r}")
