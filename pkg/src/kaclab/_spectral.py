"""Internal Fourier helpers for densities on uniform grids.

Transforms follow the probabilists' convention with 2 pi in the exponent,
``fhat(xi) = int e^{-2 i pi x xi} f(x) dx``, approximated by the rectangle
sum ``dx * sum_j f(x_j) e^{-2 i pi x_j xi}`` (spectrally accurate for
smooth densities that vanish at the grid ends).  Off-grid frequency sets
with uniform spacing are sampled exactly with chirp-z transforms, which is
what keeps mass and energy of Wild convolutions conserved to rounding.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import CZT

__all__ = ["FrequencyGrid", "half_spectrum", "scaled_half_spectrum", "synthesize"]


class FrequencyGrid:
    """Frequency bookkeeping for a spatial grid of G points, padded to M = pad * G."""

    def __init__(self, x0: float, dx: float, n_points: int, pad: int = 2):
        self.x0 = float(x0)
        self.dx = float(dx)
        self.G = int(n_points)
        self.M = pad * self.G
        self.K = self.M // 2 + 1          # half-spectrum length (k = 0 .. K-1)
        self.dxi = 1.0 / (self.M * self.dx)
        self.k = np.arange(self.K)
        self._czt_cache: dict[float, CZT] = {}

    def xi_half(self) -> np.ndarray:
        return self.k * self.dxi

    def xi_symmetric(self) -> np.ndarray:
        h = self.xi_half()
        return np.concatenate([-h[:0:-1], h])

    def czt_plan(self, scale: float) -> CZT:
        plan = self._czt_cache.get(scale)
        if plan is None:
            w = np.exp(-2j * np.pi * self.dx * scale * self.dxi)
            plan = CZT(n=self.G, m=self.K, w=w, a=1.0)
            self._czt_cache[scale] = plan
        return plan


def half_spectrum(fg: FrequencyGrid, values: np.ndarray) -> np.ndarray:
    """fhat(k * dxi) for k = 0..K-1."""
    buf = np.zeros(fg.M)
    buf[: fg.G] = values
    F = np.fft.rfft(buf) * fg.dx
    return F * np.exp(-2j * np.pi * fg.x0 * fg.xi_half())


def scaled_half_spectrum(fg: FrequencyGrid, values: np.ndarray, scale: float) -> np.ndarray:
    """fhat(k * scale * dxi) for k = 0..K-1, exact via chirp-z (scale >= 0)."""
    raw = fg.czt_plan(scale)(values)
    eta = fg.k * scale * fg.dxi
    return raw * fg.dx * np.exp(-2j * np.pi * fg.x0 * eta)


def synthesize(fg: FrequencyGrid, half: np.ndarray) -> np.ndarray:
    """Inverse transform of a Hermitian half-spectrum back onto the G spatial nodes."""
    full = np.empty(fg.M, dtype=complex)
    full[: fg.K] = half
    full[fg.K:] = np.conj(half[1 : fg.M - fg.K + 1][::-1])
    xi = np.fft.fftfreq(fg.M, d=fg.dx)
    vals = np.fft.ifft(full * np.exp(2j * np.pi * xi * fg.x0)) / fg.dx
    return np.real(vals[: fg.G])
