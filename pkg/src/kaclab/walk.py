"""The Kac walk on the energy sphere S^{N-1}(sqrt N).

A state is a velocity vector ``V = (v_1, ..., v_N)`` with
``sum v_j^2 = N`` (units with particle mass 2, so each particle has unit
mean kinetic energy).  One step picks an unordered pair (i, j) uniformly
and an angle theta uniformly on [0, 2pi) and rotates (v_i, v_j) by theta.
Poissonifying the step clock at rate N gives the continuous-time walk
whose generator has spectral gap ``Delta_N = (N + 2) / (2 (N - 1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SphereState",
    "PairRotation",
    "WalkConfig",
    "EstimateReport",
    "rotate_pair",
    "step",
    "run_steps",
    "simulate_continuous",
    "sample_uniform_sphere",
    "sample_uniform_sphere_batch",
    "phi_gap",
    "phi_gap_values",
    "sphere_fourth_moment",
    "rayleigh_quotient",
    "spectral_gap_exact",
]

#: relative tolerance on the energy constraint sum v_j^2 = N
ENERGY_RTOL = 1e-10


@dataclass(frozen=True)
class SphereState:
    """A point on S^{N-1}(sqrt N); construction validates the radius."""

    velocities: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.velocities, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("need at least 2 particles")
        r2 = float(np.dot(v, v))
        n = v.size
        if abs(r2 - n) > ENERGY_RTOL * n:
            raise ValueError(f"state off the sphere: sum v^2 = {r2!r}, expected {n}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "velocities", v)

    @property
    def n_particles(self) -> int:
        return self.velocities.size

    def energy(self) -> float:
        return float(np.dot(self.velocities, self.velocities))

    def renormalized(self) -> "SphereState":
        v = self.velocities
        return SphereState(v * math.sqrt(v.size / np.dot(v, v)))


@dataclass(frozen=True)
class PairRotation:
    """Indices of the colliding pair and the rotation angle."""

    i: int
    j: int
    theta: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("pair indices must be distinct")
        if not 0.0 <= self.theta < 2.0 * math.pi:
            raise ValueError("theta must lie in [0, 2 pi)")


@dataclass(frozen=True)
class WalkConfig:
    """Reproducibility knobs for walk runs."""

    seed: int = 0
    time_mode: str = "poisson-continuous"  # or "discrete-steps"
    renorm_interval: int = 10_000

    def __post_init__(self):
        if self.time_mode not in ("discrete-steps", "poisson-continuous"):
            raise ValueError(f"unknown time_mode {self.time_mode!r}")
        if self.renorm_interval < 1:
            raise ValueError("renorm_interval must be >= 1")


@dataclass(frozen=True)
class EstimateReport:
    """A Monte Carlo point estimate with its standard error."""

    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.std_error < 0 or self.n_samples < 1:
            raise ValueError("need std_error >= 0 and n_samples >= 1")


def rotate_pair(state: SphereState, rot: PairRotation) -> SphereState:
    """Rotate (v_i, v_j) -> (c v_i - s v_j, s v_i + c v_j); other coordinates unchanged."""
    n = state.n_particles
    if not (0 <= rot.i < n and 0 <= rot.j < n):
        raise IndexError("pair index out of range")
    v = state.velocities.copy()
    c, s = math.cos(rot.theta), math.sin(rot.theta)
    vi, vj = v[rot.i], v[rot.j]
    v[rot.i] = c * vi - s * vj
    v[rot.j] = s * vi + c * vj
    return SphereState(v)


def _draw_pair(n: int, rng) -> tuple[int, int]:
    # rejection-free apart from the reroll on equality: exactly uniform over
    # unordered pairs at O(1) expected cost
    i = int(rng.integers(0, n))
    j = int(rng.integers(0, n))
    while j == i:
        j = int(rng.integers(0, n))
    return i, j


def step(state: SphereState, rng) -> SphereState:
    """One Kac step: uniform unordered pair, uniform angle."""
    i, j = _draw_pair(state.n_particles, rng)
    theta = float(rng.uniform(0.0, 2.0 * math.pi))
    return rotate_pair(state, PairRotation(i, j, theta))


def _advance_in_place(v: np.ndarray, n_steps: int, rng, renorm_interval: int) -> None:
    n = v.size
    done = 0
    while done < n_steps:
        burst = min(n_steps - done, renorm_interval)
        ii = rng.integers(0, n, size=burst)
        jj = rng.integers(0, n, size=burst)
        eq = ii == jj
        while eq.any():
            jj[eq] = rng.integers(0, n, size=int(eq.sum()))
            eq = ii == jj
        th = rng.uniform(0.0, 2.0 * math.pi, size=burst)
        cs, sn = np.cos(th), np.sin(th)
        for k in range(burst):
            i, j = ii[k], jj[k]
            vi, vj = v[i], v[j]
            v[i] = cs[k] * vi - sn[k] * vj
            v[j] = sn[k] * vi + cs[k] * vj
        done += burst
        v *= math.sqrt(n / np.dot(v, v))


def run_steps(state: SphereState, n_steps: int, rng,
              renorm_interval: int = 10_000) -> SphereState:
    """Apply ``n_steps`` Kac steps, rescaling to radius sqrt(N) every
    ``renorm_interval`` steps to control floating-point drift."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    v = state.velocities.copy()
    _advance_in_place(v, n_steps, rng, renorm_interval)
    return SphereState(v)


def simulate_continuous(state: SphereState, duration: float, rng,
                        renorm_interval: int = 10_000) -> SphereState:
    """Continuous-time walk: steps arrive in a Poisson stream of rate N,
    so a run of the given duration performs Poisson(N * duration) steps."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    n_steps = int(rng.poisson(state.n_particles * duration))
    return run_steps(state, n_steps, rng, renorm_interval)


def sample_uniform_sphere(N: int, rng) -> SphereState:
    """Exact sample from the uniform measure sigma^N: scale N iid normals."""
    if N < 2:
        raise ValueError("need N >= 2")
    v = rng.normal(size=N)
    v *= math.sqrt(N / np.dot(v, v))
    return SphereState(v)


def sample_uniform_sphere_batch(N: int, batch: int, rng) -> np.ndarray:
    """(batch, N) array of independent sigma^N samples."""
    V = rng.normal(size=(batch, N))
    V *= np.sqrt(N / np.einsum("ij,ij->i", V, V))[:, None]
    return V


def sphere_fourth_moment(N: int) -> float:
    """Sphere average of v_1^4 on S^{N-1}(sqrt N).

    v_1^2 / N is Beta(1/2, (N-1)/2), whose second moment gives
    ``<v^4> = 3 N / (N + 2)``.
    """
    return 3.0 * N / (N + 2.0)


def phi_gap_values(V: np.ndarray) -> np.ndarray:
    """Vectorized gap trial function on rows of a (batch, N) array."""
    V = np.atleast_2d(V)
    N = V.shape[1]
    return np.einsum("ij,ij->i", V * V, V * V) - N * sphere_fourth_moment(N)


def phi_gap(state: SphereState) -> float:
    """Gap trial function ``sum_j (v_j^4 - <v^4>)``, orthogonal to constants."""
    return float(phi_gap_values(state.velocities[None, :])[0])


def spectral_gap_exact(N: int) -> float:
    """Spectral gap of the Kac generator, ``(N + 2) / (2 (N - 1))``."""
    if N < 2:
        raise ValueError("need N >= 2")
    return (N + 2.0) / (2.0 * (N - 1.0))


def rayleigh_quotient(phi, N: int, n_samples: int, rng,
                      chunk_size: int = 100_000) -> EstimateReport:
    """Monte Carlo Rayleigh quotient ``-<phi, L_N phi> / Var(phi)``.

    Uses the symmetric Dirichlet form: the numerator is
    ``(N/2) E[(phi(V) - phi(R V))^2]`` over V ~ sigma^N, a uniform pair and
    a uniform angle, which needs one random rotation per sample instead of
    the N(N-1)/2 terms of the transition operator.  ``phi`` must accept a
    (batch, N) array of states and return a (batch,) array.

    The standard error combines numerator and denominator fluctuations by
    the delta method.  A trial function that is constant on the sphere has
    no Rayleigh quotient and raises ValueError.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rows = None
    num_parts, phi_parts = [], []
    for start in range(0, n_samples, chunk_size):
        B = min(chunk_size, n_samples - start)
        V = sample_uniform_sphere_batch(N, B, rng)
        vals = np.asarray(phi(V), dtype=float)
        ii = rng.integers(0, N, size=B)
        jj = rng.integers(0, N, size=B)
        eq = ii == jj
        while eq.any():
            jj[eq] = rng.integers(0, N, size=int(eq.sum()))
            eq = ii == jj
        th = rng.uniform(0.0, 2.0 * math.pi, size=B)
        c, s = np.cos(th), np.sin(th)
        if rows is None or len(rows) != B:
            rows = np.arange(B)
        vi = V[rows, ii].copy()
        vj = V[rows, jj].copy()
        V[rows, ii] = c * vi - s * vj
        V[rows, jj] = s * vi + c * vj
        rotated = np.asarray(phi(V), dtype=float)
        num_parts.append(0.5 * N * (vals - rotated) ** 2)
        phi_parts.append(vals)
    X = np.concatenate(num_parts)
    P = np.concatenate(phi_parts)
    Y = (P - P.mean()) ** 2
    xbar, ybar = X.mean(), Y.mean()
    scale = float(np.mean(P * P))
    if ybar <= 1e-12 * max(scale, 1.0):
        raise ValueError("trial function is constant on the sphere")
    ratio = xbar / ybar
    n = X.size
    cov = np.cov(X, Y) if n > 1 else np.zeros((2, 2))
    rel_var = cov[0, 0] / xbar**2 + cov[1, 1] / ybar**2 - 2.0 * cov[0, 1] / (xbar * ybar)
    se = abs(ratio) * math.sqrt(max(rel_var, 0.0) / n)
    return EstimateReport(value=float(ratio), std_error=float(se), n_samples=n)
