"""Conditioned tensor products on the energy sphere.

Restricting a product density ``f^{(x) N}`` to S^{N-1}(sqrt N) and
renormalizing gives the canonical chaotic family with one-particle
marginal ~ f.  The normalization

    Z_N(f, r) = int_{S^{N-1}(r)} f^{(x) N} d sigma_r^N

is computable from one-dimensional convolutions: if h is the density of
v^2 under f, then S_N = sum v_j^2 has density s_N = h^{*N} and

    Z_N(f, sqrt u) = 2 h^{*N}(u) / (u^{N/2 - 1} |S^{N-1}|).

Everything downstream is kept in log space (Z_N lives on the scale
``(2 pi)^{-N/2}``).  The relative normalization
``Z'_N(f, r) = Z_N(f, r) / Z_N(gamma, r)`` tends to ``sqrt(2)/Sigma`` at
r = sqrt(N), where ``Sigma^2 = Var_f(v^2)``; the module provides both the
exact convolution-power tables and that asymptotic form, plus marginal
densities, a Metropolis sampler for the conditioned product, and the
per-particle entropy and entropy-production estimators that exhibit
extensivity and slow entropy production.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import gammainc, gammaln

from . import densities as dens
from .densities import GaussianMixture, GridDensity1D
from .walk import EstimateReport, SphereState
from .wild import ThetaQuadrature

__all__ = [
    "RadialDensity",
    "ZTable",
    "AsymptoticParams",
    "ConditionedProduct",
    "squared_pushforward",
    "convolve_power",
    "build_ztable",
    "asymptotic_log_Z",
    "log_marginal_sigma",
    "marginal_sigma",
    "marginal_conditioned",
    "marginal_entropy_gap",
    "MetropolisSampler",
    "metropolis_sampler",
    "entropy_per_particle",
    "entropy_production_per_particle",
    "gamma_ratio_check",
]

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_RADIAL_POINTS = 2**16


def _log_sphere_area(m: int) -> float:
    """log |S^{m-1}| = log(2 pi^{m/2} / Gamma(m/2))."""
    return math.log(2.0) + 0.5 * m * math.log(math.pi) - gammaln(0.5 * m)


@dataclass(frozen=True)
class RadialDensity:
    """Density of u = v^2 under f, tabulated on a uniform grid [0, u_max].

    Node values are built from exact cell masses and centroids (the
    integrable ``u^{-1/2}`` singularity at 0 is handled through the
    substitution ``u = w^2``), with each cell's mass split between its two
    edge nodes so that total mass and mean are preserved exactly.
    """

    u_max: float
    values: np.ndarray
    energy: float          # E(f) = mean of h
    sigma: float           # Sigma(f) = std of h

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.u_max, self.values.size)

    @property
    def du(self) -> float:
        return self.u_max / (self.values.size - 1)

    def mass(self) -> float:
        return float(self.values.sum() * self.du)

    def mean(self) -> float:
        u = self.grid
        w = self.values * self.du
        return float(np.sum(u * w) / np.sum(w))

    def variance(self) -> float:
        u = self.grid
        w = self.values * self.du
        m = np.sum(u * w) / np.sum(w)
        return float(np.sum((u - m) ** 2 * w) / np.sum(w))


def _cell_layout(u_max: float, n_points: int):
    u = np.linspace(0.0, u_max, n_points)
    return u, u[1] - u[0]


def _nodes_from_cells(u, du, cell_mass, cell_first_moment):
    """Split each cell's mass between its edge nodes, preserving the centroid."""
    n = u.size
    with np.errstate(invalid="ignore", divide="ignore"):
        centroid = np.where(cell_mass > 0, cell_first_moment / np.maximum(cell_mass, 1e-300), 0.0)
    lam = np.clip(np.where(cell_mass > 0, (centroid - u[:-1]) / du, 0.5), 0.0, 1.0)
    wts = np.zeros(n)
    idx = np.arange(n - 1)
    np.add.at(wts, idx, cell_mass * (1.0 - lam))
    np.add.at(wts, idx + 1, cell_mass * lam)
    return wts / du


def _default_umax(f, mom) -> float:
    """Smallest grid end keeping the h tail mass below ~1e-8."""
    if isinstance(f, GaussianMixture):
        # per-component tail: w * erfc(sqrt(u / 2a)) < 1e-8 once u > ~34 a
        return max(mom.energy + 12.0 * mom.sigma, 34.0 * float(f.variances.max()))
    return max(f.v_max, -f.v_min) ** 2


def squared_pushforward(f, u_max: float | None = None,
                        n_points: int = DEFAULT_RADIAL_POINTS) -> RadialDensity:
    """Radial density ``h(u) = (f(sqrt u) + f(-sqrt u)) / (2 sqrt u)`` of v^2 under f."""
    mom = dens.moments(f)
    E, Sigma = mom.energy, mom.sigma
    if u_max is None:
        u_max = _default_umax(f, mom)
    u, du = _cell_layout(u_max, n_points)
    if isinstance(f, GaussianMixture):
        cdf = np.zeros(u.size)
        pm = np.zeros(u.size)
        for w, a in zip(f.weights, f.variances):
            z = u / (2.0 * a)
            cdf += w * gammainc(0.5, z)      # P(v^2 <= u) for one Maxwellian
            pm += w * a * gammainc(1.5, z)   # int_0^u s dH_a(s)
    else:
        x, g = f.grid, f.values
        Fc = np.concatenate([[0.0], cumulative_trapezoid(g, x)])
        G2 = np.concatenate([[0.0], cumulative_trapezoid(g * x * x, x)])
        root = np.sqrt(u)
        cdf = np.interp(root, x, Fc, left=0.0, right=Fc[-1]) \
            - np.interp(-root, x, Fc, left=0.0, right=Fc[-1])
        pm = np.interp(root, x, G2, left=0.0, right=G2[-1]) \
            - np.interp(-root, x, G2, left=0.0, right=G2[-1])
    vals = _nodes_from_cells(u, du, np.diff(cdf), np.diff(pm))
    h = RadialDensity(u_max=float(u_max), values=vals, energy=E, sigma=Sigma)
    if abs(h.mass() - 1.0) > 1e-6:
        raise ValueError(
            f"radial grid [0, {u_max:.4g}] loses mass {1.0 - h.mass():.2e}; increase u_max")
    return h


def convolve_power(h: RadialDensity, N: int) -> RadialDensity:
    """Density of S_N = sum_{j<=N} V_j^2, the N-fold convolution power h^{*N}.

    Binary powering with FFT linear convolutions on a zero-padded grid;
    intermediate results are truncated back to [0, u_max], which is safe as
    long as ``u_max >= N E + 12 sqrt(N) Sigma`` (enforced).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    need = N * h.energy + 12.0 * math.sqrt(N) * h.sigma
    if h.u_max < need:
        raise ValueError(f"u_max = {h.u_max:.4g} < N E + 12 sqrt(N) Sigma = {need:.4g}")
    leak = 1.0 - h.mass()
    if leak > 1e-4:
        raise ValueError(f"radial density loses mass {leak:.2e} > 1e-4 on its grid")
    du = h.du
    w = h.values * du
    G = w.size

    def mul(x, y):
        z = np.fft.irfft(np.fft.rfft(x, 2 * G) * np.fft.rfft(y, 2 * G), 2 * G)[:G]
        return np.maximum(z, 0.0)

    result = None
    base = w.copy()
    n = N
    while n > 0:
        if n & 1:
            result = base.copy() if result is None else mul(result, base)
        n >>= 1
        if n:
            base = mul(base, base)
    s = RadialDensity(u_max=h.u_max, values=result / du,
                      energy=N * h.energy, sigma=math.sqrt(N) * h.sigma)
    if abs(s.mass() - 1.0) > 1e-5:
        raise ValueError(f"convolution power lost mass: {1.0 - s.mass():.2e}")
    return s


@dataclass(frozen=True)
class ZTable:
    """log Z_N(f, sqrt u) and log Z'_N(f, sqrt u) over a u-grid.

    ``log Z_N`` comes from the convolution power via
    ``Z_N(f, sqrt u) = 2 s_N(u) / (u^{N/2-1} |S^{N-1}|)``; the Gaussian
    reference is exact, ``log Z_N(gamma, sqrt u) = -(N/2) log(2 pi) - u/2``,
    so ``log Z' = log Z - log Z_gamma``.  Entries where s_N vanishes on the
    grid are -inf.
    """

    N: int
    u: np.ndarray
    log_Z: np.ndarray
    log_Z_prime: np.ndarray
    energy: float
    sigma: float

    def _interp(self, table: np.ndarray, u):
        u = np.asarray(u, dtype=float)
        finite = np.isfinite(table)
        lo, hi = self.u[finite][0], self.u[finite][-1]
        out = np.interp(u, self.u[finite], table[finite])
        return np.where((u < lo) | (u > hi), -np.inf, out)

    def log_z_at(self, u):
        return self._interp(self.log_Z, u)

    def log_z_prime_at(self, u):
        return self._interp(self.log_Z_prime, u)

    def to_csv(self, path) -> None:
        header = json.dumps(
            {"N": self.N, "energy": self.energy, "sigma": self.sigma},
            sort_keys=True)
        with open(path, "w") as fh:
            fh.write(f"# {header}\n")
            fh.write("u,log_Z,log_Z_prime\n")
            for row in zip(self.u, self.log_Z, self.log_Z_prime):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def build_ztable(f, N: int, n_points: int = DEFAULT_RADIAL_POINTS,
                 u_max: float | None = None) -> ZTable:
    """Exact (convolution-power) table of log Z_N and log Z'_N for density f."""
    if N < 2:
        raise ValueError("need N >= 2")
    mom = dens.moments(f)
    need = N * mom.energy + 12.0 * math.sqrt(N) * mom.sigma
    u_max = max(u_max or 0.0, need, _default_umax(f, mom))
    h = squared_pushforward(f, u_max=u_max, n_points=n_points)
    sN = convolve_power(h, N)
    u = sN.grid
    with np.errstate(divide="ignore", invalid="ignore"):
        log_s = np.where(sN.values > 0.0, np.log(np.maximum(sN.values, 1e-300)), -np.inf)
        log_Z = (math.log(2.0) + log_s
                 - (0.5 * N - 1.0) * np.log(u)
                 - _log_sphere_area(N))
    log_Z[0] = -np.inf
    log_Z_gauss = -0.5 * N * LOG_2PI - 0.5 * u
    log_Zp = log_Z - log_Z_gauss
    return ZTable(N=N, u=u, log_Z=log_Z, log_Z_prime=log_Zp,
                  energy=mom.energy, sigma=mom.sigma)


@dataclass(frozen=True)
class AsymptoticParams:
    """Energy and Sigma = sqrt(Var(v^2)) entering the Z_N asymptotics."""

    energy: float
    sigma: float

    @classmethod
    def from_density(cls, f) -> "AsymptoticParams":
        mom = dens.moments(f)
        if mom.sigma <= 0:
            raise ValueError("Sigma must be positive")
        return cls(energy=mom.energy, sigma=mom.sigma)


def asymptotic_log_Z(f, N: int, r: float) -> float:
    """Log of the main term of the Z_N asymptotics,

        Z_N(f, r) ~ (sqrt 2 / Sigma) gamma^{(N)}(r) (alpha_N(N) / alpha_N(r^2))
                    exp(-(r^2 - N E)^2 / (2 N Sigma^2)),

    with ``alpha_N(u) = u^{N/2-1} e^{-u/2}`` and
    ``gamma^{(N)}(r) = e^{-r^2/2} (2 pi)^{-N/2}``.  For f = gamma and
    r = sqrt(N) every correction factor is 1 and the value is exact.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if N < 2:
        raise ValueError("need N >= 2")
    par = AsymptoticParams.from_density(f)
    E, Sigma = par.energy, par.sigma
    u = r * r
    return (0.5 * math.log(2.0) - math.log(Sigma)
            - 0.5 * N * LOG_2PI
            + (0.5 * N - 1.0) * (math.log(N) - math.log(u))
            - 0.5 * N
            - (u - N * E) ** 2 / (2.0 * N * Sigma * Sigma))


def log_marginal_sigma(N: int, k: int, s2):
    """Log density of the first k coordinates under sigma^N at squared radius s2."""
    if not 2 <= k + 2 <= N:
        raise ValueError("need k <= N - 2")
    s2 = np.asarray(s2, dtype=float)
    out = np.full(s2.shape, -np.inf)
    ok = s2 < N
    out[ok] = (0.5 * (N - k - 2) * np.log1p(-s2[ok] / N)
               + _log_sphere_area(N - k) - 0.5 * k * math.log(N) - _log_sphere_area(N))
    return out


def marginal_sigma(N: int, k: int, y):
    """Density of the k-coordinate marginal of the uniform sphere measure at y.

    y is a point of R^k, or an array of points with trailing dimension k
    (a bare 1-d array is interpreted as a vector of k=1 points).
    """
    y = np.asarray(y, dtype=float)
    if k == 1 and (y.ndim == 0 or y.ndim == 1):
        s2 = y * y
    else:
        if y.shape[-1] != k:
            raise ValueError(f"y must have trailing dimension {k}")
        s2 = np.sum(y * y, axis=-1)
    val = np.exp(log_marginal_sigma(N, k, np.atleast_1d(s2)))
    return float(val[0]) if np.isscalar(s2) or s2.ndim == 0 else val.reshape(np.shape(s2))


def _squared_sum(k: int, y):
    y = np.asarray(y, dtype=float)
    if k == 1 and y.ndim <= 1:
        return y * y, y
    if y.shape[-1] != k:
        raise ValueError(f"y must have trailing dimension {k}")
    return np.sum(y * y, axis=-1), y


def marginal_conditioned(f, N: int, k: int, y,
                         table: ZTable, table_minus_k: ZTable):
    """Density of the k-particle marginal of the conditioned product at y:

        P_k(v_1..v_k) = prod (f/gamma)(v_j)
                        * Z'_{N-k}(f, sqrt(N - s^2)) / Z'_N(f, sqrt N)
                        * P_k sigma^N,   s^2 = sum v_j^2,

    evaluated in log space from the two exact tables.  Supported for
    k in {1, 2}; zero for s^2 >= N.
    """
    if k not in (1, 2):
        raise ValueError("marginals are implemented for k in {1, 2}")
    if table is None or table_minus_k is None:
        raise ValueError("ZTables for N and N - k are required")
    if table.N != N or table_minus_k.N != N - k:
        raise ValueError("tables must be built for N and N - k")
    s2, y = _squared_sum(k, y)
    s2a = np.atleast_1d(np.asarray(s2, dtype=float))
    if k == 1:
        lratio = np.atleast_1d(f.log_evaluate(y) + 0.5 * LOG_2PI + 0.5 * s2a)
    else:
        coords = np.atleast_2d(y)
        lratio = (f.log_evaluate(coords[..., 0]) + f.log_evaluate(coords[..., 1])
                  + LOG_2PI + 0.5 * s2a)
        lratio = np.atleast_1d(lratio)
    lzp_N = float(table.log_z_prime_at(np.array(float(N))))
    lzp_shift = table_minus_k.log_z_prime_at(N - s2a)
    logP = lratio + lzp_shift - lzp_N + log_marginal_sigma(N, k, s2a)
    out = np.exp(logP)
    return float(out[0]) if np.ndim(s2) == 0 else out.reshape(np.shape(s2))


def marginal_entropy_gap(f, N: int, k: int,
                         table: ZTable | None = None,
                         table_minus_k: ZTable | None = None,
                         n_quad: int = 4001,
                         n_points: int = DEFAULT_RADIAL_POINTS) -> float:
    """Relative entropy ``H(P_k mu^{(N)} | f^{(x) k})``: the entropic distance
    of the conditioned-product marginal from the product ``f^{(x) k}``.

    Tables are built on demand when not supplied.  The computed marginal is
    renormalized on the quadrature window before the entropy integral.
    """
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    table = table or build_ztable(f, N, n_points=n_points)
    table_minus_k = table_minus_k or build_ztable(f, N - k, n_points=n_points)
    half = min(12.0, math.sqrt(N) * 0.999)
    if k == 1:
        v = np.linspace(-half, half, n_quad)
        P = marginal_conditioned(f, N, 1, v, table, table_minus_k)
        P = P / np.trapezoid(P, v)
        lf = f.log_evaluate(v)
        integ = np.where(P > 0.0, P * (np.log(np.maximum(P, 1e-300)) - lf), 0.0)
        return float(np.trapezoid(integ, v))
    m = min(n_quad, 401)
    g = np.linspace(-half, half, m)
    Y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    P = marginal_conditioned(f, N, 2, Y.reshape(-1, 2), table, table_minus_k).reshape(m, m)
    dg = g[1] - g[0]
    P = P / (P.sum() * dg * dg)
    lff = f.log_evaluate(Y[..., 0]) + f.log_evaluate(Y[..., 1])
    integ = np.where(P > 0.0, P * (np.log(np.maximum(P, 1e-300)) - lff), 0.0)
    return float(integ.sum() * dg * dg)


@dataclass(frozen=True)
class ConditionedProduct:
    """The conditioned tensor product of f on S^{N-1}(sqrt N).

    Its density with respect to sigma^N is
    ``F^N(V) = prod f(v_j) / Z_N(f, sqrt N)``; in log space, using
    ``sum v_j^2 = N`` on the sphere,

        log F^N(V) = sum_j log f(v_j) + (N/2) log(2 pi) + N/2 - log Z'_N.
    """

    f: GaussianMixture | GridDensity1D
    N: int
    log_z_prime: float

    @classmethod
    def build(cls, f, N: int, n_points: int = DEFAULT_RADIAL_POINTS) -> "ConditionedProduct":
        """Construct with the exact table normalization log Z'_N(f, sqrt N)."""
        table = build_ztable(f, N, n_points=n_points)
        return cls(f=f, N=N, log_z_prime=float(table.log_z_prime_at(np.array(float(N)))))

    @classmethod
    def gaussian(cls, N: int) -> "ConditionedProduct":
        """The conditioned product of gamma itself: F^N = 1, log Z' = 0."""
        return cls(f=dens.maxwellian(1.0), N=N, log_z_prime=0.0)

    def log_density(self, state: SphereState) -> float:
        v = state.velocities
        if v.size != self.N:
            raise ValueError("state size does not match N")
        return float(np.sum(self.f.log_evaluate(v))
                     + 0.5 * self.N * LOG_2PI + 0.5 * self.N - self.log_z_prime)


class MetropolisSampler:
    """Markov chains targeting the conditioned product ``F^N sigma^N``.

    Proposals are Kac rotation steps, which are sigma^N-reversible, so the
    Metropolis ratio is just ``f(v_i') f(v_j') / (f(v_i) f(v_j))`` -- the
    Gaussian factors cancel on the sphere and the normalization drops out.
    For f = gamma every proposal is accepted and the chain *is* the Kac
    walk.  ``n_chains`` vectorized chains share one random stream, so runs
    are reproducible given (seed, n_chains).
    """

    def __init__(self, cp: ConditionedProduct, rng,
                 n_chains: int = 1,
                 burn_in: int | None = None,
                 thinning: int | None = None):
        if not isinstance(cp.f, GaussianMixture):
            raise TypeError("sampling requires a GaussianMixture base density")
        self.cp = cp
        self.rng = rng
        self.n_chains = int(n_chains)
        N = cp.N
        # defaults: gap ~ 1/2 per unit time and one unit time ~ N proposals
        self.burn_in = 50 * N if burn_in is None else int(burn_in)
        self.thinning = N if thinning is None else int(thinning)
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        self.accepted = 0
        self.proposed = 0
        f = cp.f
        comp = rng.choice(f.weights.size, size=(self.n_chains, N), p=f.weights)
        V = rng.normal(size=(self.n_chains, N)) * np.sqrt(f.variances[comp])
        V *= np.sqrt(N / np.einsum("ij,ij->i", V, V))[:, None]
        self.V = V
        self._rows = np.arange(self.n_chains)
        self._burned = False

    def _logf(self, v):
        return self.cp.f.log_evaluate(v)

    def advance(self, n_proposals: int) -> None:
        N = self.cp.N
        C = self.n_chains
        rng = self.rng
        V = self.V
        rows = self._rows
        for _ in range(n_proposals):
            i = rng.integers(0, N, size=C)
            j = rng.integers(0, N, size=C)
            eq = i == j
            while eq.any():
                j[eq] = rng.integers(0, N, size=int(eq.sum()))
                eq = i == j
            th = rng.uniform(0.0, 2.0 * np.pi, size=C)
            c, s = np.cos(th), np.sin(th)
            vi = V[rows, i]
            vj = V[rows, j]
            vip = c * vi - s * vj
            vjp = s * vi + c * vj
            dlog = self._logf(vip) + self._logf(vjp) - self._logf(vi) - self._logf(vj)
            accept = np.log(rng.random(C)) < dlog
            V[rows[accept], i[accept]] = vip[accept]
            V[rows[accept], j[accept]] = vjp[accept]
            self.accepted += int(accept.sum())
            self.proposed += C

    def _ensure_burned(self):
        if not self._burned:
            self.advance(self.burn_in)
            self._burned = True

    def draw(self) -> np.ndarray:
        """Advance by one thinning interval and return the (n_chains, N) state array."""
        self._ensure_burned()
        self.advance(self.thinning)
        return self.V

    def acceptance_ratio(self) -> float:
        return self.accepted / max(self.proposed, 1)

    def __iter__(self):
        while True:
            V = self.draw()
            for c in range(self.n_chains):
                yield SphereState(V[c])


def metropolis_sampler(cp: ConditionedProduct, burn_in: int | None,
                       thinning: int | None, rng) -> MetropolisSampler:
    """Stream of states distributed per the conditioned product (iterate it)."""
    return MetropolisSampler(cp, rng, n_chains=1, burn_in=burn_in, thinning=thinning)


def _chain_estimate(chain_means: np.ndarray, n_samples: int) -> EstimateReport:
    C = chain_means.size
    value = float(chain_means.mean())
    se = float(chain_means.std(ddof=1) / math.sqrt(C)) if C > 1 else 0.0
    return EstimateReport(value=value, std_error=se, n_samples=n_samples)


def entropy_per_particle(cp: ConditionedProduct, n_samples: int, rng,
                         n_chains: int = 64,
                         burn_in: int | None = None,
                         thinning: int | None = None) -> EstimateReport:
    """Monte Carlo estimate of ``H_N(F^N) / N`` for the conditioned product.

    On the sphere the entropy reduces exactly to

        H_N / N = E_{F^N}[log f(v_1)] + (1 + log 2 pi)/2 - log Z'_N / N,

    and by exchangeability ``log f(v_1)`` is averaged over all coordinates
    of each retained sample.  As N grows this converges to H(f | gamma):
    entropy is asymptotically extensive over chaotic families.  The
    standard error comes from the spread of independent chain means.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sampler = MetropolisSampler(cp, rng, n_chains=n_chains,
                                burn_in=burn_in, thinning=thinning)
    keep = max(1, math.ceil(n_samples / n_chains))
    acc = np.zeros(n_chains)
    for _ in range(keep):
        V = sampler.draw()
        acc += cp.f.log_evaluate(V).mean(axis=1)
    chain_means = acc / keep + 0.5 * (1.0 + LOG_2PI) - cp.log_z_prime / cp.N
    return _chain_estimate(chain_means, keep * n_chains)


def entropy_production_per_particle(cp: ConditionedProduct, n_samples: int, rng,
                                    n_chains: int = 64,
                                    pairs_per_state: int = 4,
                                    quad: ThetaQuadrature | None = None,
                                    burn_in: int | None = None,
                                    thinning: int | None = None) -> EstimateReport:
    """Monte Carlo estimate of ``D_N(F^N) / N``, the entropy production per
    particle of the Kac master equation at the conditioned product.

    Uses the one-sided representation

        D_N / N = E_{V ~ F^N sigma^N, (i,j), theta}
                  [log f(v_i) + log f(v_j) - log f(v_i') - log f(v_j')]:

    only the rotated pair contributes, since the off-pair factors and the
    normalization cancel in the log-difference.  The angle average is done
    by quadrature at each sampled (state, pair), which costs O(n_nodes) and
    removes most of the theta variance.  The limit of this quantity is
    ``2 D(f)``, twice the Boltzmann-Kac entropy production of f.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    quad = quad or ThetaQuadrature(16)
    th = quad.nodes
    cth, sth = np.cos(th), np.sin(th)
    sampler = MetropolisSampler(cp, rng, n_chains=n_chains,
                                burn_in=burn_in, thinning=thinning)
    keep = max(1, math.ceil(n_samples / n_chains))
    N = cp.N
    logf = cp.f.log_evaluate
    acc = np.zeros(n_chains)
    rows = np.arange(n_chains)
    for _ in range(keep):
        V = sampler.draw()
        val = np.zeros(n_chains)
        for _ in range(pairs_per_state):
            i = rng.integers(0, N, size=n_chains)
            j = rng.integers(0, N, size=n_chains)
            eq = i == j
            while eq.any():
                j[eq] = rng.integers(0, N, size=int(eq.sum()))
                eq = i == j
            vi = V[rows, i]
            vj = V[rows, j]
            vip = np.multiply.outer(vi, cth) - np.multiply.outer(vj, sth)
            vjp = np.multiply.outer(vi, sth) + np.multiply.outer(vj, cth)
            rotated = (logf(vip) + logf(vjp)).mean(axis=1)
            val += logf(vi) + logf(vj) - rotated
        acc += val / pairs_per_state
    chain_means = acc / keep
    return _chain_estimate(chain_means, keep * n_chains)


def gamma_ratio_check(f, N: int, v1: float, v2: float,
                      table: ZTable | None = None,
                      table_minus_2: ZTable | None = None,
                      n_points: int = DEFAULT_RADIAL_POINTS) -> float:
    """Ratio of the limit ``2 pi exp((v1^2 + v2^2)/2)`` to the exact table
    value of ``Z_{N-2}(f, sqrt(N - s^2)) / Z_N(f, sqrt N)``; tends to 1.
    """
    s2 = v1 * v1 + v2 * v2
    if s2 >= N:
        raise ValueError("need v1^2 + v2^2 < N")
    table = table or build_ztable(f, N, n_points=n_points)
    table_minus_2 = table_minus_2 or build_ztable(f, N - 2, n_points=n_points)
    log_target = LOG_2PI + 0.5 * s2
    log_table_ratio = (float(table_minus_2.log_z_at(np.array(N - s2)))
                       - float(table.log_z_at(np.array(float(N)))))
    return math.exp(log_target - log_table_ratio)
