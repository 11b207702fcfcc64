"""One-dimensional velocity densities.

Two representations are supported side by side:

* :class:`GaussianMixture` -- finite mixtures of centered Maxwellians
  ``M_a(v) = (2 pi a)^{-1/2} exp(-v^2 / 2a)``.  All moments and most
  integrals are available analytically or by adaptive quadrature on the
  exact density, so the key small-parameter limits carry no
  discretization error.
* :class:`GridDensity1D` -- arbitrary densities tabulated on a uniform
  grid, for everything that is not a Gaussian mixture.

Entropies use the convention ``0 * log 0 = 0``.  Total variation is the
unnormalized L1 distance ``int |f - g|`` so that the
Csiszar-Kullback-Pinsker inequality reads ``H(f|g) >= TV^2 / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc, logsumexp

__all__ = [
    "GaussianMixture",
    "GridDensity1D",
    "MomentReport",
    "DEFAULT_GRID",
    "maxwellian",
    "bc_mixture",
    "evaluate",
    "log_evaluate",
    "moments",
    "tail_energy",
    "relative_entropy_to_gaussian",
    "relative_entropy",
    "tv_distance",
    "mollify_standardize",
    "to_grid",
    "write_grid_density",
    "read_grid_density",
]

LOG_2PI = math.log(2.0 * math.pi)

#: default grid spec (v_min, v_max, n_points); wide enough for the
#: variance-50 component of bc_mixture(0.01)
DEFAULT_GRID = (-12.0, 12.0, 4096)


@dataclass(frozen=True)
class MomentReport:
    """Mass, mean, kinetic energy E, Sigma = sqrt(Var(v^2)) and fourth moment."""

    mass: float
    mean: float
    energy: float
    sigma: float
    fourth_moment: float


@dataclass(frozen=True)
class GaussianMixture:
    """Centered Gaussian mixture ``sum_i w_i M_{a_i}``.

    Weights must be positive and sum to one; variances must be positive.
    Instances are immutable and safe to share between threads.
    """

    weights: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        a = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if w.shape != a.shape or w.ndim != 1:
            raise ValueError("weights and variances must be 1-d arrays of equal length")
        if np.any(w <= 0) or np.any(a <= 0):
            raise ValueError("weights and variances must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1 within 1e-12")
        w.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variances", a)

    def evaluate(self, v):
        return np.exp(self.log_evaluate(v))

    def log_evaluate(self, v):
        """log f(v), stable for arguments far in the tails."""
        v = np.asarray(v, dtype=float)
        z = (
            np.log(self.weights)
            - 0.5 * np.log(2.0 * np.pi * self.variances)
            - np.multiply.outer(v * v, 1.0 / (2.0 * self.variances))
        )
        return logsumexp(z, axis=-1)

    def max_std(self) -> float:
        return float(np.sqrt(self.variances.max()))


@dataclass(frozen=True)
class GridDensity1D:
    """Non-negative density sampled on a uniform grid, linearly interpolated.

    The stored values are normalized so that the trapezoid mass is one.
    Evaluation returns zero outside ``[v_min, v_max]``.
    """

    v_min: float
    v_max: float
    values: np.ndarray
    grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 8:
            raise ValueError("values must be a 1-d array with at least 8 points")
        if not (self.v_min < 0.0 < self.v_max):
            raise ValueError("grid must straddle the origin: v_min < 0 < v_max")
        if np.any(vals < 0):
            raise ValueError("density values must be non-negative")
        grid = np.linspace(self.v_min, self.v_max, vals.size)
        mass = np.trapezoid(vals, grid)
        if mass <= 0:
            raise ValueError("density has zero mass on the grid")
        vals = vals / mass
        vals.flags.writeable = False
        grid.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "grid", grid)

    @property
    def n_points(self) -> int:
        return self.values.size

    @property
    def dv(self) -> float:
        return (self.v_max - self.v_min) / (self.n_points - 1)

    def evaluate(self, v):
        return np.interp(np.asarray(v, dtype=float), self.grid, self.values, left=0.0, right=0.0)

    def log_evaluate(self, v):
        with np.errstate(divide="ignore"):
            return np.log(self.evaluate(v))


def maxwellian(a: float) -> GaussianMixture:
    """The centered Maxwellian M_a of variance a > 0."""
    if a <= 0:
        raise ValueError("variance must be positive")
    return GaussianMixture(np.array([1.0]), np.array([float(a)]))


def bc_mixture(delta: float) -> GaussianMixture:
    """Two-Maxwellian unit-energy density ``(1-delta) M_a + delta M_b``.

    Here ``b = 1/(2 delta)`` and ``a = 1/(2(1-delta))``, so each component
    carries exactly half of the kinetic energy while for small delta almost
    all of the mass sits in the narrow component.  This is the family whose
    entropy production collapses as delta -> 0.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    a = 1.0 / (2.0 * (1.0 - delta))
    b = 1.0 / (2.0 * delta)
    return GaussianMixture(np.array([1.0 - delta, delta]), np.array([a, b]))


def evaluate(f, v):
    """Pointwise density value for either representation."""
    return f.evaluate(v)


def log_evaluate(f, v):
    return f.log_evaluate(v)


def moments(f) -> MomentReport:
    """Mass, mean, energy ``E = int v^2 f``, ``Sigma = sqrt(int (v^2-E)^2 f)``, fourth moment.

    Gaussian mixtures use the closed forms ``E = sum w_i a_i`` and
    ``int v^4 f = 3 sum w_i a_i^2``; grid densities use trapezoid quadrature.
    """
    if isinstance(f, GaussianMixture):
        w, a = f.weights, f.variances
        energy = float(np.sum(w * a))
        fourth = float(3.0 * np.sum(w * a * a))
        return MomentReport(
            mass=1.0,
            mean=0.0,
            energy=energy,
            sigma=math.sqrt(max(fourth - energy * energy, 0.0)),
            fourth_moment=fourth,
        )
    g, x = f.values, f.grid
    mass = float(np.trapezoid(g, x))
    mean = float(np.trapezoid(g * x, x))
    energy = float(np.trapezoid(g * x * x, x))
    fourth = float(np.trapezoid(g * x**4, x))
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"grid density is not normalized (mass {mass!r})")
    sigma2 = float(np.trapezoid(g * (x * x - energy) ** 2, x))
    return MomentReport(mass=mass, mean=mean, energy=energy,
                        sigma=math.sqrt(max(sigma2, 0.0)), fourth_moment=fourth)


def _gaussian_tail_energy(a: float, c: float) -> float:
    # int_{|v| >= c} v^2 M_a dv = a * [2 z phi(z) + erfc(z/sqrt 2)], z = c/sqrt(a)
    z = c / math.sqrt(a)
    return a * (2.0 * z * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) + erfc(z / math.sqrt(2.0)))


def tail_energy(f, r: float) -> float:
    """``chi(r) = int_{|v| >= 1/r} v^2 f(v) dv``; nondecreasing in r, -> E as r -> inf."""
    if r <= 0:
        raise ValueError("r must be positive")
    c = 1.0 / r
    if isinstance(f, GaussianMixture):
        return float(sum(w * _gaussian_tail_energy(a, c)
                         for w, a in zip(f.weights, f.variances)))
    x, g = f.grid, f.values
    if c >= f.v_max and c >= -f.v_min:
        return 0.0
    integ = np.where(np.abs(x) >= c, g * x * x, 0.0)
    val = np.trapezoid(integ, x)
    # partial cells at +-c: add the interpolated triangle pieces
    for s in (+1.0, -1.0):
        b = s * c
        if f.v_min < b < f.v_max:
            k = int(np.searchsorted(x, b))
            lo, hi = x[k - 1], x[k]
            gb = float(f.evaluate(b)) * b * b
            if s > 0:
                ghi = g[k] * hi * hi
                val += 0.5 * (gb + ghi) * (hi - b) - 0.5 * ghi * (hi - lo)
            else:
                glo = g[k - 1] * lo * lo
                val += 0.5 * (glo + gb) * (b - lo) - 0.5 * glo * (hi - lo)
    return float(max(val, 0.0))


def _quad_mixture(f: GaussianMixture, integrand, extra_pts=()) -> float:
    """Adaptive quadrature over the real line with mixture-aware break points."""
    sd = f.max_std()
    pts = sorted({-3.0 * sd, -sd, 0.0, sd, 3.0 * sd, *extra_pts})
    lo, hi = -40.0 * sd, 40.0 * sd
    val, _ = quad(integrand, lo, hi, points=pts, limit=400)
    return val


def relative_entropy_to_gaussian(f) -> float:
    """``H(f|gamma) = int f log(f/gamma)`` with gamma the standard Gaussian."""
    if isinstance(f, GaussianMixture):
        def integrand(v):
            lf = f.log_evaluate(v)
            lg = -0.5 * LOG_2PI - 0.5 * v * v
            return math.exp(lf) * (lf - lg)
        return _quad_mixture(f, integrand)
    x, g = f.grid, f.values
    lg = -0.5 * LOG_2PI - 0.5 * x * x
    with np.errstate(divide="ignore", invalid="ignore"):
        integ = np.where(g > 0.0, g * (np.log(g) - lg), 0.0)
    return float(np.trapezoid(integ, x))


def relative_entropy(f, g) -> float:
    """``H(f|g) = int f log(f/g)``; ``+inf`` if f puts mass where g vanishes."""
    if isinstance(f, GaussianMixture) and isinstance(g, GaussianMixture):
        def integrand(v):
            lf = f.log_evaluate(v)
            return math.exp(lf) * (lf - g.log_evaluate(v))
        return _quad_mixture(f, integrand, extra_pts=(-3.0 * g.max_std(), 3.0 * g.max_std()))
    fg, gg, x = _common_grid(f, g)
    bad = (fg > 0) & (gg == 0.0)
    if np.any(bad):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        integ = np.where(fg > 0.0, fg * (np.log(fg) - np.log(gg)), 0.0)
    return float(np.trapezoid(integ, x))


def tv_distance(f, g) -> float:
    """Total variation in the ``int |f - g|`` convention (values in [0, 2])."""
    if isinstance(f, GaussianMixture) and isinstance(g, GaussianMixture):
        sd = max(f.max_std(), g.max_std())
        val, _ = quad(lambda v: abs(f.evaluate(v) - g.evaluate(v)),
                      -40.0 * sd, 40.0 * sd,
                      points=[-3.0 * sd, 0.0, 3.0 * sd], limit=400)
        return float(val)
    fg, gg, x = _common_grid(f, g)
    return float(np.trapezoid(np.abs(fg - gg), x))


def _common_grid(f, g):
    if isinstance(f, GridDensity1D) and isinstance(g, GridDensity1D):
        same = (f.v_min == g.v_min and f.v_max == g.v_max and f.n_points == g.n_points)
        if not same:
            raise ValueError("grid densities must share the same grid")
        return f.values, g.values, f.grid
    grid = f if isinstance(f, GridDensity1D) else g
    x = grid.grid
    return f.evaluate(x), g.evaluate(x), x


def to_grid(m: GaussianMixture, spec=DEFAULT_GRID) -> GridDensity1D:
    """Sample a mixture on a uniform grid and renormalize.

    The spec must cover at least 8 standard deviations of the widest
    component on each side.
    """
    v_min, v_max, n = spec
    need = 8.0 * m.max_std()
    if v_min > -need or v_max < need:
        raise ValueError(
            f"grid [{v_min}, {v_max}] does not cover 8 standard deviations ({need:.3g})")
    x = np.linspace(v_min, v_max, int(n))
    return GridDensity1D(v_min, v_max, m.evaluate(x))


def mollify_standardize(f: GridDensity1D, delta: float) -> GridDensity1D:
    """Truncate to [-1/delta, 1/delta], mollify by the heat kernel of
    variance ``2 delta``, renormalize, and affinely standardize to zero mean
    and unit second moment.

    The affine step is exact for the trapezoid rule (the grid itself is
    mapped), so the output has mean 0 and energy 1 to rounding accuracy.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    cut = 1.0 / delta
    x = f.grid
    vals = np.where(np.abs(x) <= cut, f.values, 0.0)
    if not np.any(vals > 0):
        raise ValueError("truncation window [-1/delta, 1/delta] removes all mass")
    dv = f.dv
    # heat kernel e^{delta Laplacian} has variance 2*delta
    sig = math.sqrt(2.0 * delta)
    half = max(int(math.ceil(8.0 * sig / dv)), 2)
    k = np.arange(-half, half + 1) * dv
    kern = np.exp(-0.5 * (k / sig) ** 2)
    kern /= kern.sum()
    # extend the grid so the mollified tails are kept
    ext = half
    x_ext = np.linspace(x[0] - ext * dv, x[-1] + ext * dv, len(vals) + 2 * ext)
    full = np.convolve(np.concatenate([np.zeros(ext), vals, np.zeros(ext)]), kern, mode="same")
    mass = np.trapezoid(full, x_ext)
    full /= mass
    mean = np.trapezoid(full * x_ext, x_ext)
    var = np.trapezoid(full * (x_ext - mean) ** 2, x_ext)
    s = math.sqrt(var)
    # affine image of a uniform grid is uniform; trapezoid moments map exactly
    return GridDensity1D((x_ext[0] - mean) / s, (x_ext[-1] - mean) / s, full * s)


def write_grid_density(f: GridDensity1D, path) -> None:
    """Text format: header ``# grid v_min v_max n_points`` then one value per line."""
    with open(path, "w") as fh:
        fh.write(f"# grid {f.v_min:.17g} {f.v_max:.17g} {f.n_points}\n")
        for v in f.values:
            fh.write(f"{v:.17g}\n")


def read_grid_density(path) -> GridDensity1D:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != "#" or header[1] != "grid":
            raise ValueError("not a grid density file")
        v_min, v_max, n = float(header[2]), float(header[3]), int(header[4])
        vals = np.array([float(line) for line in fh if line.strip()])
    if vals.size != n:
        raise ValueError(f"expected {n} values, found {vals.size}")
    return GridDensity1D(v_min, v_max, vals)
