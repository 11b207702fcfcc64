"""Quantitative local central limit theorem in one dimension.

For a standardized density g (zero mean, unit variance) with
characteristic function ``ghat(xi) = int e^{-2 i pi x xi} g(x) dx``, the
rescaled convolution powers ``g_N(x) = sqrt(N) g^{*N}(sqrt(N) x)``
converge to the standard Gaussian in sup norm, with an explicit
three-term error budget driven by

* a high-frequency contraction ``|ghat(xi)| <= 1 - alpha`` off a
  neighbourhood of 0 (alpha admits a constructive lower bound in terms of
  the entropy of g alone),
* the Gaussian spectral tail, and
* a low-frequency quadratic approximation
  ``|ghat(xi) - (1 - 2 pi^2 xi^2)| <= eps(delta) xi^2``, with eps
  controlled by the tail energy ``chi(r) = int_{|x| >= 1/r} x^2 g``.

All spectral quantities are measured on a symmetric uniform frequency
grid; rescaled powers sample ``ghat(xi / sqrt N)`` exactly with a chirp-z
transform, so the Gaussian case reproduces gamma to rounding for every N.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import densities as dens
from ._spectral import FrequencyGrid, half_spectrum, scaled_half_spectrum, synthesize
from .densities import GridDensity1D

__all__ = [
    "CharacteristicFunction",
    "BoundIiiReport",
    "LcltBoundReport",
    "standardize",
    "char_fn",
    "measure_alpha",
    "entropy_alpha_lower_bound",
    "measure_eps",
    "eps_tail_majorant",
    "check_bound_iii",
    "find_alpha0",
    "rescaled_convolution",
    "lclt_error_bound",
]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CharacteristicFunction:
    """ghat sampled on a symmetric uniform frequency grid."""

    xi: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if xi.shape != vals.shape or xi.ndim != 1:
            raise ValueError("xi and values must be 1-d arrays of equal length")
        k0 = int(np.argmin(np.abs(xi)))
        if abs(vals[k0] - 1.0) > 1e-8:
            raise ValueError(f"ghat(0) = {vals[k0]!r}, expected 1")
        if np.abs(vals).max() > 1.0 + 1e-8:
            raise ValueError("|ghat| exceeds 1")
        if not np.allclose(vals[::-1], np.conj(vals), atol=1e-10):
            raise ValueError("ghat(-xi) must equal conj(ghat(xi))")
        xi.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "values", vals)

    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


def standardize(g: GridDensity1D) -> GridDensity1D:
    """Affine change of variable to zero mean and unit variance (exact for
    the trapezoid rule: the grid itself is transformed)."""
    x, vals = g.grid, g.values
    mean = float(np.trapezoid(vals * x, x))
    var = float(np.trapezoid(vals * (x - mean) ** 2, x))
    if var <= 0:
        raise ValueError("density has no variance to standardize")
    s = math.sqrt(var)
    return GridDensity1D((g.v_min - mean) / s, (g.v_max - mean) / s, vals * s)


def _is_standardized(g: GridDensity1D, tol: float = 1e-9) -> bool:
    x, vals = g.grid, g.values
    mean = float(np.trapezoid(vals * x, x))
    var = float(np.trapezoid(vals * x * x, x)) - mean * mean
    return abs(mean) <= tol and abs(var - 1.0) <= tol


def char_fn(g: GridDensity1D, pad: int = 2) -> CharacteristicFunction:
    """Characteristic function ``ghat(xi) = int e^{-2 i pi x xi} g(x) dx``.

    The input is standardized first if it is not already; the grid is
    zero-padded by ``pad`` before the transform, giving frequency spacing
    ``1 / (pad G dv)``.
    """
    if not _is_standardized(g):
        g = standardize(g)
    fg = FrequencyGrid(g.v_min, g.dv, g.n_points, pad=pad)
    half = half_spectrum(fg, g.values)
    half[0] = 1.0  # mass is normalized; pin ghat(0) against rounding
    xi = fg.xi_symmetric()
    vals = np.concatenate([np.conj(half[:0:-1]), half])
    return CharacteristicFunction(xi=xi, values=vals)


def measure_alpha(cf: CharacteristicFunction, eta: float) -> float:
    """Measured high-frequency contraction ``1 - max_{|xi| >= eta} |ghat|``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    mask = np.abs(cf.xi) >= eta
    if not mask.any():
        raise ValueError("eta exceeds the frequency grid")
    return float(1.0 - cf.modulus()[mask].max())


def entropy_alpha_lower_bound(g: GridDensity1D, eta: float) -> float:
    """Constructive lower bound on the contraction alpha from entropy alone:

        alpha >= (3/8) e^{-8h} (pi h)^2 / (2 (1 + 1/eta)^2),

    where h bounds the relative entropy of g restricted to [-R, R] against
    the uniform measure there (R = 2):
    ``h = int g |log g| + log(2R) - log(1 - 1/R^2)`` and
    ``int g |log g| <= int g log g + 2 (1 + log(2 pi)/2)``.
    All intermediate constants are derived from the density, none fitted.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    x, vals = g.grid, g.values
    with np.errstate(divide="ignore", invalid="ignore"):
        glogg = np.where(vals > 0, vals * np.log(vals), 0.0)
    H = float(np.trapezoid(glogg, x))
    g_abs_log = H + 2.0 * (1.0 + 0.5 * LOG_2PI)
    R = 2.0
    h = g_abs_log + math.log(2.0 * R) - math.log(1.0 - 1.0 / R**2)
    return 0.375 * math.exp(-8.0 * h) * (math.pi * h) ** 2 / (2.0 * (1.0 + 1.0 / eta) ** 2)


def measure_eps(cf: CharacteristicFunction, delta: float) -> float:
    """Measured quadratic-approximation defect
    ``max_{0 < |xi| <= delta} |ghat - (1 - 2 pi^2 xi^2)| / xi^2``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    xi = cf.xi
    mask = (np.abs(xi) <= delta) & (np.abs(xi) > 0)
    if not mask.any():
        raise ValueError("no grid frequencies in (0, delta]")
    x2 = xi[mask] ** 2
    return float((np.abs(cf.values[mask] - (1.0 - 2.0 * math.pi**2 * x2)) / x2).max())


def eps_tail_majorant(g, delta: float, n_r: int = 200) -> float:
    """Tail-energy majorant of the quadratic defect,

        eps(delta) <= 4 pi^2 inf_{r > 0} [pi delta / r + chi(r)],

    with ``chi(r) = int_{|x| >= 1/r} x^2 g``: the Taylor remainder of ghat
    splits at |x| = 1/r into ``|sin(pi zeta x)| <= pi |zeta| |x|`` on the
    bulk and the tail energy beyond.
    """
    rs = np.geomspace(1e-3, 1e3, n_r)
    best = math.inf
    for r in rs:
        val = math.pi * delta / r + dens.tail_energy(g, float(r))
        best = min(best, val)
    return 4.0 * math.pi**2 * best


@dataclass(frozen=True)
class BoundIiiReport:
    """Pointwise check of ``|ghat| <= max(1 - pi^2 xi^2, 1 - alpha0)``."""

    holds: bool
    worst_margin: float
    worst_xi: float


def check_bound_iii(cf: CharacteristicFunction, alpha0: float) -> BoundIiiReport:
    if not 0.0 < alpha0 < 1.0:
        raise ValueError("alpha0 must lie in (0, 1)")
    bound = np.maximum(1.0 - math.pi**2 * cf.xi**2, 1.0 - alpha0)
    margin = bound - cf.modulus()
    k = int(np.argmin(margin))
    return BoundIiiReport(holds=bool(margin[k] >= -1e-12),
                          worst_margin=float(margin[k]),
                          worst_xi=float(cf.xi[k]))


def find_alpha0(cf: CharacteristicFunction) -> float:
    """Largest alpha0 for which the max(parabola, plateau) bound holds on the
    grid: the minimum of ``1 - |ghat|`` over frequencies where |ghat| exceeds
    the parabola ``1 - pi^2 xi^2``."""
    mod = cf.modulus()
    par = 1.0 - math.pi**2 * cf.xi**2
    mask = mod > par
    if not mask.any():
        return float(1.0 - mod[np.abs(cf.xi) > 0].max())
    return float((1.0 - mod[mask]).min())


def rescaled_convolution(g: GridDensity1D, N: int, pad: int = 2) -> GridDensity1D:
    """``g_N(x) = sqrt(N) g^{*N}(sqrt(N) x)`` via frequency-domain powering.

    ``ghat_N(xi) = ghat(xi / sqrt N)^N`` is sampled exactly on the uniform
    frequency grid with a chirp-z transform and inverted back onto the
    spatial grid.  Standardization is preserved; the Gaussian is a fixed
    point to rounding.  Raises when ``|ghat_N|`` at the grid edge exceeds
    1e-8 (aliasing).
    """
    if N < 2:
        raise ValueError("need N >= 2")
    if not _is_standardized(g):
        g = standardize(g)
    fg = FrequencyGrid(g.v_min, g.dv, g.n_points, pad=pad)
    half = scaled_half_spectrum(fg, g.values, 1.0 / math.sqrt(N))
    half /= half[0].real  # exact unit mass before powering
    powered = half**N
    if np.abs(powered[-1]) > 1e-8:
        raise ValueError("spectral tail of ghat^N does not vanish: aliasing risk")
    vals = synthesize(fg, powered)
    return GridDensity1D(g.v_min, g.v_max, np.maximum(vals, 0.0))


@dataclass(frozen=True)
class LcltBoundReport:
    """Three-term sup-norm error budget for ``|g_N - gamma|`` at one N.

    ``bound_total = term_high + term_gauss_tail + term_low`` with

    * ``term_high  = sqrt(N) (1 - alpha)^{N - p'} ||g||_p^{p'}``,
    * ``term_gauss_tail = e^{-2 pi^2 N delta^2} / (sqrt(N) delta)``,
    * ``term_low   = sqrt(2 eps) (2/pi^2 + (1 - alpha0)^{N/2} (delta sqrt N)^2)``,

    alongside the observed sup error of the rescaled convolution.  Log-scale
    copies are kept because the middle term underflows for moderate N.
    """

    N: int
    p: float
    p_conj: float
    delta: float
    alpha: float
    alpha0: float
    eps_delta: float
    g_norm_p: float
    term_high: float
    term_gauss_tail: float
    term_low: float
    bound_total: float
    observed_sup_error: float
    log_term_high: float
    log_term_gauss_tail: float
    log_term_low: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def lclt_error_bound(g: GridDensity1D, N: int, delta: float,
                     p: float = 2.0) -> LcltBoundReport:
    """Assemble the explicit sup-norm bound and the observed error for g at N.

    ``alpha`` is the contraction measured at eta = delta; ``eps`` is the
    larger of the measured quadratic defects of g and of the Gaussian at
    threshold delta (both enter the telescoping estimate); ``alpha0`` comes
    from :func:`find_alpha0`.  The N-dependent plateau term inside
    ``term_low`` is evaluated at the actual N, which is tighter than its
    N-independent majorant and still valid.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if p <= 1:
        raise ValueError("need p > 1")
    p_conj = p / (p - 1.0)
    if N < p_conj:
        raise ValueError(f"need N >= p' = {p_conj}")
    if not _is_standardized(g):
        g = standardize(g)
    cf = char_fn(g)
    alpha = measure_alpha(cf, delta)
    eps_g = measure_eps(cf, delta)
    gamma_cf = CharacteristicFunction(cf.xi, np.exp(-2.0 * math.pi**2 * cf.xi**2) + 0j)
    eps = max(eps_g, measure_eps(gamma_cf, delta))
    alpha0 = find_alpha0(cf)
    g_norm_p = float(np.trapezoid(g.values**p, g.grid) ** (1.0 / p))

    log_high = (0.5 * math.log(N) + (N - p_conj) * math.log1p(-alpha)
                + p_conj * math.log(g_norm_p))
    log_tail = -2.0 * math.pi**2 * N * delta**2 - math.log(math.sqrt(N) * delta)
    plateau = 0.5 * N * math.log1p(-alpha0) + 2.0 * math.log(delta * math.sqrt(N))
    # int_R |xi| e^{-pi^2 xi^2 / 2} dxi = 2 / pi^2
    term_low = math.sqrt(2.0 * eps) * (2.0 / math.pi**2 + math.exp(plateau))
    term_high = math.exp(log_high)
    term_tail = math.exp(log_tail)

    gN = rescaled_convolution(g, N)
    x = gN.grid
    gamma_vals = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    observed = float(np.abs(gN.values - gamma_vals).max())

    return LcltBoundReport(
        N=N, p=p, p_conj=p_conj, delta=delta,
        alpha=alpha, alpha0=alpha0, eps_delta=eps, g_norm_p=g_norm_p,
        term_high=term_high, term_gauss_tail=term_tail, term_low=term_low,
        bound_total=term_high + term_tail + term_low,
        observed_sup_error=observed,
        log_term_high=log_high, log_term_gauss_tail=log_tail,
        log_term_low=math.log(term_low),
    )
