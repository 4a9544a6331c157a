"""Atom-aware estimators for density functionals, with baselines.

Four estimators built on the unique-observation KDE:

  ds   (one sample):  fit the density on the unique points of one half of the
       sample, average the influence function over the unique points of the
       other half, add, then symmetrize by swapping the halves and averaging.
  loo  (one sample):  for every unique point, evaluate the functional plus
       influence on the KDE fit without that point, and average.
  ds / loo (two samples): the same constructions with a density per sample and
       both partial influence functions; the two-sample LOO pairs the i-th
       unique x-point with the i-th unique y-point (each sequence in original
       index order) and cycles the shorter sequence until the longer one is
       exhausted.

Baselines share the machinery: ``naive`` treats every observation as unique
(the classical estimator, inconsistent under atoms), ``oracle`` consumes the
latent labels and runs the classical estimator on the continuous subsample.
On duplicate-free data all three coincide bit for bit.

Degenerate supports never raise here: a half or unique set that is empty (or
too small for a data-driven bandwidth) contributes through the zero density,
and the report carries a structured warning.  Per-point quadratures reuse one
shared Simpson grid, refined once on the full-support density.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityEstimate
from .errors import ContractError, DegenerateDataError
from .functionals import (ClampCounter, FunctionalSpec, QuadratureConfig,
                          DEFAULT_QUADRATURE, evaluate_functional_full,
                          refine_integral, simpson_weights)
from .kernels import GAUSSIAN, BandwidthRule, KernelSpec, bandwidth
from .sample import Dataset, TieRule, partition, split_halves

REPORT_SCHEMA_VERSION = 1
_GRID_CHUNK = 1 << 21  # elements per (rows x grid) temporary

METHODS = ("ds", "loo", "naive_ds", "naive_loo", "oracle_ds", "oracle_loo")


@dataclass(frozen=True)
class EstimatorConfig:
    kernel: KernelSpec = GAUSSIAN
    bw: BandwidthRule = BandwidthRule.silverman()
    tie_rule: TieRule = TieRule.exact()
    quad: QuadratureConfig = DEFAULT_QUADRATURE


@dataclass
class EstimateReport:
    """A single functional estimate plus the diagnostics that qualify it."""

    value: float
    method: str
    functional: str
    n: int
    n_unique: int
    pi_hat: float
    h: tuple
    m: int | None = None
    n_unique_2: int | None = None
    pi_hat_2: float | None = None
    h2: tuple | None = None
    clamp_count: int = 0
    clamp_budget_exceeded: bool = False
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "value": self.value,
            "method": self.method,
            "functional": self.functional,
            "n": self.n,
            "m": self.m,
            "n_unique": self.n_unique,
            "n_unique_2": self.n_unique_2,
            "pi_hat": self.pi_hat,
            "pi_hat_2": self.pi_hat_2,
            "h": list(self.h),
            "h2": list(self.h2) if self.h2 is not None else None,
            "clamp_count": self.clamp_count,
            "clamp_budget_exceeded": self.clamp_budget_exceeded,
            "warnings": list(self.warnings),
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


# ---------------------------------------------------------------------------
# Shared numeric helpers (univariate)
# ---------------------------------------------------------------------------

def _kde_or_zero(vals: np.ndarray, kernel: KernelSpec, bw: BandwidthRule,
                 warnings: list, what: str) -> DensityEstimate:
    vals = np.asarray(vals, dtype=np.float64).reshape(-1)
    if vals.size == 0:
        warnings.append(f"{what}: empty support, contributions use the zero density")
        h = bw.h if bw.rule == "fixed" else 1.0
        return DensityEstimate.zero(1, kernel, h)
    try:
        h = bandwidth(bw, vals.reshape(-1, 1), vals.size)
    except DegenerateDataError:
        warnings.append(f"{what}: bandwidth rule degenerate on {vals.size} point(s), "
                        "contributions use the zero density")
        return DensityEstimate.zero(1, kernel, 1.0)
    return DensityEstimate(vals.reshape(-1, 1), h, kernel, 1)


def _weighted_sums(u_vals: np.ndarray, u_counts: np.ndarray, h: float,
                   kernel: KernelSpec, xs: np.ndarray) -> np.ndarray:
    """sum_k counts_k * K((x - u_k)/h) for each x, chunked over k."""
    out = np.zeros(xs.size)
    if u_vals.size == 0 or xs.size == 0:
        return out
    rows = max(1, _GRID_CHUNK // max(xs.size, 1))
    for a in range(0, u_vals.size, rows):
        kb = kernel((xs[None, :] - u_vals[a:a + rows, None]) / h)
        out += u_counts[a:a + rows].astype(np.float64) @ kb
    return out


def _freeze_grid(nu_of_xs, lo: float, hi: float, q: QuadratureConfig,
                 warnings: list, what: str):
    res = refine_integral(nu_of_xs, lo, hi, q)
    if not res.converged:
        warnings.append(f"{what}: shared quadrature grid did not converge to "
                        f"rel. tolerance {q.refine_tolerance:g}")
    return res.xs, res.weights


# ---------------------------------------------------------------------------
# One-sample cores
# ---------------------------------------------------------------------------

def _ds_half_term(T, fit_est, eval_pts, q, counter, warnings, label) -> float:
    ev = evaluate_functional_full(T, fit_est, q=q)
    counter.add(ev.clamp_count)
    warnings.extend(f"{label}: {w}" for w in ev.warnings)
    if eval_pts.size == 0:
        warnings.append(f"{label}: no influence points in the complementary half")
        return ev.value
    psi = T.psi(fit_est.pdf(eval_pts), ev.integral, q.density_floor, counter)
    return ev.value + float(np.mean(psi))


def _ds_one_value(x: np.ndarray, front: np.ndarray, back: np.ndarray,
                  T, cfg, counter, warnings):
    f_front = _kde_or_zero(x[front], cfg.kernel, cfg.bw, warnings, "front half")
    f_back = _kde_or_zero(x[back], cfg.kernel, cfg.bw, warnings, "back half")
    t1 = _ds_half_term(T, f_front, x[back], cfg.quad, counter, warnings, "half 1")
    t2 = _ds_half_term(T, f_back, x[front], cfg.quad, counter, warnings, "half 2")
    hs = tuple(e.h for e in (f_front, f_back))
    return 0.5 * (t1 + t2), hs


def _loo_one_value(support: np.ndarray, T, cfg, counter, warnings):
    """Mean over support points of T(f w/o point) + psi(point; f w/o point).

    Points sharing a value (possible for the naive baseline) yield identical
    terms, so the sum runs over distinct values weighted by multiplicity; the
    distinct values are processed in sorted order, which makes the result
    independent of the dataset ordering.
    """
    q = cfg.quad
    m = support.size
    if m == 0:
        warnings.append("unique set empty: leave-one-out sum is empty")
        return 0.0, (1.0,)
    est = _kde_or_zero(support, cfg.kernel, cfg.bw, warnings, "loo support")
    if est.is_empty:
        # bandwidth rule failed; every term uses the zero density
        i0 = 0.0
        t0 = float(T.phi(i0, q.density_floor, counter))
        psi0 = float(T.psi(np.zeros(1), i0, q.density_floor, counter)[0])
        return t0 + psi0, (est.h,)
    h = est.h
    u_vals, u_counts = np.unique(support, return_counts=True)
    pad = q.span_factor * cfg.kernel.span_radius * h
    lo, hi = float(support.min() - pad), float(support.max() + pad)
    inv_full = 1.0 / (m * h)

    def full_nu(xs):
        return T.nu(_weighted_sums(u_vals, u_counts, h, cfg.kernel, xs) * inv_full,
                    q.density_floor, counter)

    xs, w = _freeze_grid(full_nu, lo, hi, q, warnings, "loo")
    s_grid = _weighted_sums(u_vals, u_counts, h, cfg.kernel, xs)
    s_own = _weighted_sums(u_vals, u_counts, h, cfg.kernel, u_vals)
    inv_loo = 1.0 / (max(m - 1, 1) * h)
    k0 = cfg.kernel.at_zero
    floo_own = (s_own - k0) * inv_loo

    total = 0.0
    rows = max(1, _GRID_CHUNK // max(xs.size, 1))
    for a in range(0, u_vals.size, rows):
        krows = cfg.kernel((xs[None, :] - u_vals[a:a + rows, None]) / h)
        floo = (s_grid[None, :] - krows) * inv_loo
        integrals = T.nu(floo, q.density_floor, counter) @ w
        t_vals = np.asarray(T.phi(integrals, q.density_floor, counter), dtype=np.float64)
        psi_vals = T.psi(floo_own[a:a + rows], integrals, q.density_floor, counter)
        total += float(u_counts[a:a + rows] @ (t_vals + psi_vals))
    return total / m, (h,)


# ---------------------------------------------------------------------------
# Two-sample cores
# ---------------------------------------------------------------------------

def _ds_two_term(T, f_fit, g_fit, x_eval, y_eval, q, counter, warnings, label):
    ev = evaluate_functional_full(T, f_fit, g_fit, q=q)
    counter.add(ev.clamp_count)
    warnings.extend(f"{label}: {w}" for w in ev.warnings)
    value = ev.value
    if x_eval.size:
        psi_f = T.psi_f(f_fit.pdf(x_eval), g_fit.pdf(x_eval), ev.integral,
                        q.density_floor, counter)
        value += float(np.mean(psi_f))
    else:
        warnings.append(f"{label}: no x-side influence points")
    if y_eval.size:
        psi_g = T.psi_g(f_fit.pdf(y_eval), g_fit.pdf(y_eval), ev.integral,
                        q.density_floor, counter)
        value += float(np.mean(psi_g))
    else:
        warnings.append(f"{label}: no y-side influence points")
    return value


def _ds_two_value(x, xf, xb, y, yf, yb, T, cfg, counter, warnings):
    f1 = _kde_or_zero(x[xf], cfg.kernel, cfg.bw, warnings, "x front half")
    g1 = _kde_or_zero(y[yf], cfg.kernel, cfg.bw, warnings, "y front half")
    f2 = _kde_or_zero(x[xb], cfg.kernel, cfg.bw, warnings, "x back half")
    g2 = _kde_or_zero(y[yb], cfg.kernel, cfg.bw, warnings, "y back half")
    t1 = _ds_two_term(T, f1, g1, x[xb], y[yb], cfg.quad, counter, warnings, "half 1")
    t2 = _ds_two_term(T, f2, g2, x[xf], y[yf], cfg.quad, counter, warnings, "half 2")
    return 0.5 * (t1 + t2), (f1.h, f2.h), (g1.h, g2.h)


class _LooSide:
    """Precomputed kernel sums for one sample's leave-one-out densities."""

    def __init__(self, seq: np.ndarray, kernel, bw, q, counter, warnings, label):
        self.seq = np.asarray(seq, dtype=np.float64).reshape(-1)  # index order
        self.m = self.seq.size
        self.kernel = kernel
        self.label = label
        self.est = _kde_or_zero(self.seq, kernel, bw, warnings, label)
        self.ok = not self.est.is_empty
        self.h = self.est.h
        if self.ok:
            self.u_vals, self.u_counts = np.unique(self.seq, return_counts=True)
            self.inv_full = 1.0 / (self.m * self.h)
            self.inv_loo = 1.0 / (max(self.m - 1, 1) * self.h)
        else:
            self.u_vals = np.zeros(0)
            self.u_counts = np.zeros(0, dtype=np.intp)
            self.inv_full = self.inv_loo = 0.0

    def padded_range(self, span_factor):
        if not self.ok:
            return None
        pad = span_factor * self.kernel.span_radius * self.h
        return float(self.seq.min() - pad), float(self.seq.max() + pad)

    def sums(self, xs):
        if not self.ok:
            return np.zeros(np.asarray(xs).size)
        return _weighted_sums(self.u_vals, self.u_counts, self.h, self.kernel,
                              np.asarray(xs, dtype=np.float64))

    def full_pdf(self, xs):
        return self.sums(xs) * self.inv_full

    def loo_rows(self, points, s_grid, xs):
        """LOO densities on the grid after removing one copy of each point."""
        if not self.ok:
            return np.zeros((points.size, xs.size))
        krows = self.kernel((xs[None, :] - points[:, None]) / self.h)
        return (s_grid[None, :] - krows) * self.inv_loo

    def loo_at(self, removed, at, s_at):
        """LOO density at points ``at`` after removing one copy of ``removed``."""
        if not self.ok:
            return np.zeros(np.asarray(at).size)
        return (s_at - self.kernel((np.asarray(at) - removed) / self.h)) * self.inv_loo


def _loo_two_value(x_seq: np.ndarray, y_seq: np.ndarray, T, cfg, counter, warnings):
    """Two-sample LOO with index cycling (j_i over x-uniques, k_i over
    y-uniques, the shorter side wrapping modulo its length)."""
    q = cfg.quad
    a = _LooSide(x_seq, cfg.kernel, cfg.bw, q, counter, warnings, "x loo support")
    b = _LooSide(y_seq, cfg.kernel, cfg.bw, q, counter, warnings, "y loo support")
    big = max(a.m, b.m)
    if big == 0:
        warnings.append("both unique sets empty: two-sample leave-one-out sum is empty")
        return 0.0, (a.h,), (b.h,)
    ra, rb = a.padded_range(q.span_factor), b.padded_range(q.span_factor)
    if ra is None and rb is None:
        t0 = float(T.phi(0.0, q.density_floor, counter))
        warnings.append("both densities degenerate: value from the zero density")
        return t0, (a.h,), (b.h,)
    lo = min(r[0] for r in (ra, rb) if r is not None)
    hi = max(r[1] for r in (ra, rb) if r is not None)

    def full_nu(xs):
        return T.nu(a.full_pdf(xs), b.full_pdf(xs), q.density_floor, counter)

    xs, w = _freeze_grid(full_nu, lo, hi, q, warnings, "two-sample loo")
    sa_grid, sb_grid = a.sums(xs), b.sums(xs)

    idx = np.arange(big)
    vx = a.seq[idx % a.m] if a.m else np.zeros(big)
    vy = b.seq[idx % b.m] if b.m else np.zeros(big)

    # own-point and cross-point raw sums, gathered once
    sa_at_vx, sb_at_vx = a.sums(vx), b.sums(vx)
    sa_at_vy, sb_at_vy = a.sums(vy), b.sums(vy)
    ka0, kb0 = cfg.kernel.at_zero, cfg.kernel.at_zero

    if a.m == 0:
        warnings.append("x unique set empty: x-side influence terms dropped")
    if b.m == 0:
        warnings.append("y unique set empty: y-side influence terms dropped")

    total = 0.0
    rows = max(1, _GRID_CHUNK // (2 * max(xs.size, 1)))
    eps = q.density_floor
    for s in range(0, big, rows):
        sl = slice(s, min(s + rows, big))
        floo = a.loo_rows(vx[sl], sa_grid, xs) if a.m else np.zeros((sl.stop - sl.start, xs.size))
        gloo = b.loo_rows(vy[sl], sb_grid, xs) if b.m else np.zeros((sl.stop - sl.start, xs.size))
        integrals = T.nu(floo, gloo, eps, counter) @ w
        t_vals = np.asarray(T.phi(integrals, eps, counter), dtype=np.float64)
        chunk = t_vals
        if a.m:
            f_own = (sa_at_vx[sl] - ka0) * a.inv_loo
            g_at_vx = b.loo_at(vy[sl], vx[sl], sb_at_vx[sl]) if b.m else np.zeros(t_vals.size)
            chunk = chunk + T.psi_f(f_own, g_at_vx, integrals, eps, counter)
        if b.m:
            g_own = (sb_at_vy[sl] - kb0) * b.inv_loo
            f_at_vy = a.loo_at(vx[sl], vy[sl], sa_at_vy[sl]) if a.m else np.zeros(t_vals.size)
            chunk = chunk + T.psi_g(f_at_vy, g_own, integrals, eps, counter)
        total += float(np.sum(chunk))
    return total / big, (a.h,), (b.h,)


# ---------------------------------------------------------------------------
# Public estimators
# ---------------------------------------------------------------------------

def _require(T: FunctionalSpec, arity: int, *datasets: Dataset):
    if T.arity != arity:
        raise ContractError(f"{T.name} has arity {T.arity}, expected {arity}")
    for ds in datasets:
        if ds.dim != 1:
            raise ContractError("functional estimation supports univariate data only")


def _report(value, method, T, data, part, hs, counter, warnings,
            data2=None, part2=None, hs2=None) -> EstimateReport:
    total_n = data.n + (data2.n if data2 is not None else 0)
    exceeded = counter.count > 0.01 * max(total_n, 1)
    if exceeded:
        warnings.append(
            f"clamp budget exceeded: {counter.count} floored density evaluations "
            f"for n={total_n}; treat the value with caution"
        )
    if not math.isfinite(value):
        raise ContractError(f"estimator produced a non-finite value ({value})")
    return EstimateReport(
        value=float(value), method=method, functional=T.name,
        n=data.n, n_unique=part.n_unique, pi_hat=part.pi_hat, h=hs,
        m=data2.n if data2 is not None else None,
        n_unique_2=part2.n_unique if part2 is not None else None,
        pi_hat_2=part2.pi_hat if part2 is not None else None,
        h2=hs2,
        clamp_count=counter.count,
        clamp_budget_exceeded=exceeded,
        warnings=warnings,
    )


def estimate_ds_one(data: Dataset, T: FunctionalSpec,
                    cfg: EstimatorConfig = EstimatorConfig()) -> EstimateReport:
    """Symmetrized data-splitting estimator on the unique observations."""
    _require(T, 1, data)
    counter, warnings = ClampCounter(), []
    part = partition(data, cfg.tie_rule)
    front, back = split_halves(part, data)
    value, hs = _ds_one_value(data.column(), front, back, T, cfg, counter, warnings)
    return _report(value, "ds", T, data, part, hs, counter, warnings)


def estimate_loo_one(data: Dataset, T: FunctionalSpec,
                     cfg: EstimatorConfig = EstimatorConfig()) -> EstimateReport:
    """Leave-one-out estimator on the unique observations."""
    _require(T, 1, data)
    counter, warnings = ClampCounter(), []
    part = partition(data, cfg.tie_rule)
    support = data.column()[part.unique_indices]
    value, hs = _loo_one_value(support, T, cfg, counter, warnings)
    return _report(value, "loo", T, data, part, hs, counter, warnings)


def estimate_ds_two(x: Dataset, y: Dataset, T: FunctionalSpec,
                    cfg: EstimatorConfig = EstimatorConfig()) -> EstimateReport:
    """Two-sample symmetrized data-splitting estimator."""
    _require(T, 2, x, y)
    counter, warnings = ClampCounter(), []
    px, py = partition(x, cfg.tie_rule), partition(y, cfg.tie_rule)
    xf, xb = split_halves(px, x)
    yf, yb = split_halves(py, y)
    value, hx, hy = _ds_two_value(x.column(), xf, xb, y.column(), yf, yb,
                                  T, cfg, counter, warnings)
    return _report(value, "ds", T, x, px, hx, counter, warnings, y, py, hy)


def estimate_loo_two(x: Dataset, y: Dataset, T: FunctionalSpec,
                     cfg: EstimatorConfig = EstimatorConfig()) -> EstimateReport:
    """Two-sample leave-one-out estimator with index cycling."""
    _require(T, 2, x, y)
    counter, warnings = ClampCounter(), []
    px, py = partition(x, cfg.tie_rule), partition(y, cfg.tie_rule)
    x_seq = x.column()[px.unique_indices]
    y_seq = y.column()[py.unique_indices]
    value, hx, hy = _loo_two_value(x_seq, y_seq, T, cfg, counter, warnings)
    return _report(value, "loo", T, x, px, hx, counter, warnings, y, py, hy)


def _naive_halves(n: int):
    cut = n // 2
    return np.arange(cut, dtype=np.intp), np.arange(cut, n, dtype=np.intp)


def estimate_naive_ds(data: Dataset, T: FunctionalSpec,
                      cfg: EstimatorConfig = EstimatorConfig(),
                      data2: Dataset | None = None) -> EstimateReport:
    """Classical DS estimator on the full sample(s), atoms ignored."""
    counter, warnings = ClampCounter(), []
    if T.arity == 1:
        _require(T, 1, data)
        part = partition(data, cfg.tie_rule)
        front, back = _naive_halves(data.n)
        value, hs = _ds_one_value(data.column(), front, back, T, cfg, counter, warnings)
        return _report(value, "naive_ds", T, data, part, hs, counter, warnings)
    _require(T, 2, data, data2)
    px, py = partition(data, cfg.tie_rule), partition(data2, cfg.tie_rule)
    xf, xb = _naive_halves(data.n)
    yf, yb = _naive_halves(data2.n)
    value, hx, hy = _ds_two_value(data.column(), xf, xb, data2.column(), yf, yb,
                                  T, cfg, counter, warnings)
    return _report(value, "naive_ds", T, data, px, hx, counter, warnings,
                   data2, py, hy)


def estimate_naive_loo(data: Dataset, T: FunctionalSpec,
                       cfg: EstimatorConfig = EstimatorConfig(),
                       data2: Dataset | None = None) -> EstimateReport:
    """Classical LOO estimator on the full sample(s), atoms ignored."""
    counter, warnings = ClampCounter(), []
    if T.arity == 1:
        _require(T, 1, data)
        part = partition(data, cfg.tie_rule)
        value, hs = _loo_one_value(data.column(), T, cfg, counter, warnings)
        return _report(value, "naive_loo", T, data, part, hs, counter, warnings)
    _require(T, 2, data, data2)
    px, py = partition(data, cfg.tie_rule), partition(data2, cfg.tie_rule)
    value, hx, hy = _loo_two_value(data.column(), data2.column(), T, cfg,
                                   counter, warnings)
    return _report(value, "naive_loo", T, data, px, hx, counter, warnings,
                   data2, py, hy)


def _continuous_subsample(data: Dataset, labels) -> Dataset:
    if labels is None:
        raise ContractError("oracle estimators require per-observation labels")
    labels = np.asarray(labels).reshape(-1)
    if labels.size != data.n:
        raise ContractError(f"{labels.size} labels for {data.n} observations")
    return Dataset(data.values[labels == 0])


def estimate_oracle_ds(data: Dataset, labels, T: FunctionalSpec,
                       cfg: EstimatorConfig = EstimatorConfig(),
                       data2: Dataset | None = None, labels2=None) -> EstimateReport:
    """Classical DS estimator on the label-selected continuous subsample(s)."""
    counter, warnings = ClampCounter(), []
    sub = _continuous_subsample(data, labels)
    part = partition(data, cfg.tie_rule)
    if T.arity == 1:
        _require(T, 1, data)
        front, back = _naive_halves(sub.n)
        value, hs = _ds_one_value(sub.column(), front, back, T, cfg, counter, warnings)
        return _report(value, "oracle_ds", T, data, part, hs, counter, warnings)
    _require(T, 2, data, data2)
    sub2 = _continuous_subsample(data2, labels2)
    py = partition(data2, cfg.tie_rule)
    xf, xb = _naive_halves(sub.n)
    yf, yb = _naive_halves(sub2.n)
    value, hx, hy = _ds_two_value(sub.column(), xf, xb, sub2.column(), yf, yb,
                                  T, cfg, counter, warnings)
    return _report(value, "oracle_ds", T, data, part, hx, counter, warnings,
                   data2, py, hy)


def estimate_oracle_loo(data: Dataset, labels, T: FunctionalSpec,
                        cfg: EstimatorConfig = EstimatorConfig(),
                        data2: Dataset | None = None, labels2=None) -> EstimateReport:
    """Classical LOO estimator on the label-selected continuous subsample(s)."""
    counter, warnings = ClampCounter(), []
    sub = _continuous_subsample(data, labels)
    part = partition(data, cfg.tie_rule)
    if T.arity == 1:
        _require(T, 1, data)
        value, hs = _loo_one_value(sub.column(), T, cfg, counter, warnings)
        return _report(value, "oracle_loo", T, data, part, hs, counter, warnings)
    _require(T, 2, data, data2)
    sub2 = _continuous_subsample(data2, labels2)
    py = partition(data2, cfg.tie_rule)
    value, hx, hy = _loo_two_value(sub.column(), sub2.column(), T, cfg,
                                   counter, warnings)
    return _report(value, "oracle_loo", T, data, part, hx, counter, warnings,
                   data2, py, hy)


def estimate(method: str, data: Dataset, T: FunctionalSpec,
             cfg: EstimatorConfig = EstimatorConfig(),
             data2: Dataset | None = None, labels=None, labels2=None) -> EstimateReport:
    """Dispatch by method name (see METHODS)."""
    if method not in METHODS:
        raise ContractError(f"unknown method {method!r}; choose from {METHODS}")
    if T.arity == 2 and data2 is None:
        raise ContractError(f"{T.name} needs a second sample")
    if T.arity == 1 and data2 is not None:
        raise ContractError(f"{T.name} takes a single sample")
    if method == "ds":
        return estimate_ds_one(data, T, cfg) if T.arity == 1 \
            else estimate_ds_two(data, data2, T, cfg)
    if method == "loo":
        return estimate_loo_one(data, T, cfg) if T.arity == 1 \
            else estimate_loo_two(data, data2, T, cfg)
    if method == "naive_ds":
        return estimate_naive_ds(data, T, cfg, data2)
    if method == "naive_loo":
        return estimate_naive_loo(data, T, cfg, data2)
    if method == "oracle_ds":
        return estimate_oracle_ds(data, labels, T, cfg, data2, labels2)
    return estimate_oracle_loo(data, labels, T, cfg, data2, labels2)


# ---------------------------------------------------------------------------
# Asymptotic variance of the DS estimators
# ---------------------------------------------------------------------------

def predict_asymptotic_variance(T: FunctionalSpec, true_f, true_g=None,
                                pi1: float = 0.0, pi2: float | None = None,
                                zeta: float | None = None,
                                q: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Limit variance of sqrt(n) (T_hat^DS - T(F)) under the true densities.

    One sample:   Var_f(psi(X; f)) / (1 - pi1).
    Two samples:  Var_f(psi_f) / (zeta (1 - pi1))
                   + Var_g(psi_g) / ((1 - zeta) (1 - pi2)),
    with zeta the limit of n / (n + m).
    """
    if not (0.0 <= pi1 < 1.0):
        raise ContractError(f"pi1 must lie in [0, 1), got {pi1}")
    counter = ClampCounter()
    ev = evaluate_functional_full(T, true_f, true_g, q)

    def moments(density, psi_of_xs):
        lo, hi = density.integration_range(q.span_factor)
        mean = refine_integral(lambda xs: psi_of_xs(xs) * density.pdf(xs), lo, hi, q).value
        second = refine_integral(lambda xs: psi_of_xs(xs) ** 2 * density.pdf(xs),
                                 lo, hi, q).value
        return second - mean * mean

    if T.arity == 1:
        if true_g is not None:
            raise ContractError(f"{T.name} takes one distribution")
        var_f = moments(true_f, lambda xs: T.psi(true_f.pdf(xs), ev.integral,
                                                 q.density_floor, counter))
        return var_f / (1.0 - pi1)

    if pi2 is None or zeta is None:
        raise ContractError("two-sample variance needs pi2 and zeta")
    if not (0.0 <= pi2 < 1.0):
        raise ContractError(f"pi2 must lie in [0, 1), got {pi2}")
    if not (0.0 < zeta < 1.0):
        raise ContractError(f"zeta must lie in (0, 1), got {zeta}")
    var_f = moments(true_f, lambda xs: T.psi_f(true_f.pdf(xs), true_g.pdf(xs),
                                               ev.integral, q.density_floor, counter))
    var_g = moments(true_g, lambda xs: T.psi_g(true_f.pdf(xs), true_g.pdf(xs),
                                               ev.integral, q.density_floor, counter))
    return var_f / (zeta * (1.0 - pi1)) + var_g / ((1.0 - zeta) * (1.0 - pi2))
