"""Tapered segmented spectral estimation on the rescaled time axis.

For a series observed at t = 1..T the local functional DFT at rescaled time
u uses the N observations centred at floor(uT),

    D(u, omega) = sum_{s=0..N-1} h(s/N) X_{floor(uT) - N/2 + s + 1} e^{-i omega s},

the periodogram operator is the normalized rank-one tensor
D (x) D / (2 pi H_{2,N}(0)) with H_{k,N}(omega) = sum_s h(s/N)^k e^{-i omega s},
and the final estimate smooths periodograms over the N Fourier frequencies
with a renormalized kernel weight sum (circular in omega).  The taper
implicitly smooths over time with kernel K_t(x) = h(x + 1/2)^2 / int h^2 and
bandwidth b_t = N / T; the frequency bandwidth b_f scales the frequency
kernel's own axis.

Segments must lie inside the observation window: u is restricted to
[N/(2T), 1 - N/(2T)] for a series observed on [1, T], and requests outside
that band raise ``BoundaryError`` rather than padding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .funspace import adjoint
from .spectrum import SpectralGrid, TWO_PI


@dataclass(frozen=True)
class TaperSpec:
    """Data taper h on [0, 1], symmetric about 1/2.

    Built-ins: ``flat`` (h = 1), ``cosine_flat`` (raised-cosine rise and fall
    over a fraction ``rho`` of the support, flat between), and
    ``sqrt_epanechnikov`` (h(x) = sqrt(6 x (1 - x)), whose induced time
    kernel is exactly the Epanechnikov kernel 6(1/4 - x^2)).
    """

    name: str = "cosine_flat"
    rho: float = 0.1

    def __post_init__(self):
        if self.name not in ("flat", "cosine_flat", "sqrt_epanechnikov"):
            raise ValueError(f"unknown taper {self.name!r}")
        if self.name == "cosine_flat" and not 0.0 < self.rho <= 0.5:
            raise ValueError("cosine_flat rise fraction must be in (0, 1/2]")

    def values(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= 1.0)
        if self.name == "flat":
            return np.where(inside, 1.0, 0.0)
        if self.name == "sqrt_epanechnikov":
            return np.where(inside, np.sqrt(np.clip(6.0 * x * (1.0 - x), 0.0, None)), 0.0)
        rho = self.rho
        edge = np.minimum(x, 1.0 - x)
        rise = 0.5 * (1.0 - np.cos(np.pi * edge / rho))
        return np.where(inside, np.where(edge < rho, rise, 1.0), 0.0)


@dataclass(frozen=True)
class FreqKernelSpec:
    """Frequency smoothing kernel with compact support [-w, w].

    ``epanechnikov`` is 6 (1/4 - x^2) on [-1/2, 1/2]: unit mass, second
    moment 1/20, squared L2 norm 6/5.
    """

    name: str = "epanechnikov"
    half_width: float = 0.5

    def __post_init__(self):
        if self.name != "epanechnikov":
            raise ValueError(f"unknown frequency kernel {self.name!r}")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    def values(self, x):
        x = np.asarray(x, dtype=float)
        # scale-invariant shape: support rescaled to the declared half width
        z = x * (0.5 / self.half_width)
        return np.where(np.abs(z) <= 0.5, 6.0 * (0.25 - z * z) * (0.5 / self.half_width), 0.0)


@dataclass(frozen=True)
class KernelConstants:
    """Moments of a smoothing kernel: mass, mean, kappa = second moment, L2^2."""

    mass: float
    mean: float
    kappa: float
    l2: float


def induced_time_kernel(taper):
    """Time-direction kernel K_t(x) = h(x + 1/2)^2 / int h^2 on [-1/2, 1/2]."""
    h2_mass, _ = quad(lambda x: taper.values(x) ** 2, 0.0, 1.0, limit=200)

    def kernel(x):
        return taper.values(np.asarray(x) + 0.5) ** 2 / h2_mass

    return kernel


def kernel_constants(obj):
    """Kernel moments for a FreqKernelSpec or the induced kernel of a TaperSpec."""
    if isinstance(obj, TaperSpec):
        fn = induced_time_kernel(obj)
        lo, hi = -0.5, 0.5
    elif isinstance(obj, FreqKernelSpec):
        fn = obj.values
        lo, hi = -obj.half_width, obj.half_width
    else:
        raise TypeError("expected TaperSpec or FreqKernelSpec")
    mass = quad(lambda x: float(fn(x)), lo, hi, limit=200)[0]
    mean = quad(lambda x: x * float(fn(x)), lo, hi, limit=200)[0]
    kappa = quad(lambda x: x * x * float(fn(x)), lo, hi, limit=200)[0]
    l2 = quad(lambda x: float(fn(x)) ** 2, lo, hi, limit=200)[0]
    return KernelConstants(mass=mass, mean=mean, kappa=kappa, l2=l2)


def fourier_frequencies(count):
    """The ``count`` Fourier frequencies 2 pi j / count, j = -count/2 .. count/2 - 1."""
    return TWO_PI * np.arange(-(count // 2), count - count // 2) / count


def wrap_frequency(omega):
    """Wrap frequencies into [-pi, pi)."""
    return np.mod(np.asarray(omega, dtype=float) + np.pi, TWO_PI) - np.pi


def taper_transform(taper, segment_length, omegas, power=1):
    """H_{k,N}(omega) = sum_{s=0..N-1} h(s/N)^k e^{-i omega s} at arbitrary omegas."""
    s = np.arange(segment_length)
    hk = taper.values(s / segment_length) ** power
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    return np.exp(-1j * np.outer(omegas, s)) @ hk


def taper_transform_grid(taper, segment_length, power=1):
    """H_{k,N} on the Fourier grid of ``segment_length``, sorted frequency order."""
    s = np.arange(segment_length)
    hk = taper.values(s / segment_length) ** power
    return np.fft.fftshift(np.fft.fft(hk))


def dirichlet_envelope(segment_length, omegas):
    """Envelope L_N: N at frequencies within 1/N of zero, else 1/|omega| (wrapped)."""
    lam = np.abs(wrap_frequency(omegas))
    return np.where(lam <= 1.0 / segment_length, float(segment_length), 1.0 / np.maximum(lam, 1e-300))


class BoundaryError(ValueError):
    """Requested segment leaves the observation window."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Segment length, frequency bandwidth, taper and frequency kernel.

    The time bandwidth is implied: b_t = N / T once the sample size is known.
    """

    N: int
    b_f: float
    taper: TaperSpec = TaperSpec()
    fkernel: FreqKernelSpec = FreqKernelSpec()

    def __post_init__(self):
        if self.N < 2 or self.N % 2 != 0:
            raise ValueError("segment length N must be even and >= 2")
        if not self.b_f > 0:
            raise ValueError("frequency bandwidth must be positive")

    @classmethod
    def auto(cls, T, taper=None, fkernel=None):
        """Bandwidths from the reference rates b_t = T^(-1/6), b_f = 2 T^(-1/5) - b_t."""
        _, b_f, n = default_bandwidths(T)
        return cls(N=n, b_f=b_f, taper=taper or TaperSpec(), fkernel=fkernel or FreqKernelSpec())

    def b_t(self, T):
        return self.N / T

    def omega_grid(self):
        return fourier_frequencies(self.N)

    def valid_band(self, T):
        return self.N / (2.0 * T), 1.0 - self.N / (2.0 * T)


def default_bandwidths(T):
    """(realized b_t, b_f, N) for sample size T under the reference rates."""
    if T < 8:
        raise ValueError("sample size too small for the reference bandwidths")
    n = int(2 * round(T ** (5.0 / 6.0) / 2.0))
    n = max(n, 2)
    b_t = n / T
    b_f = 2.0 * T ** (-0.2) - b_t
    if b_f <= 0:
        raise ValueError("reference rates give a nonpositive frequency bandwidth")
    return b_t, b_f, n


def _segment(x, u, cfg, T, t0):
    """Tapered segment rows for rescaled time u, plus the absolute start time."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError("series must be a 2-d array (time, coefficient)")
    length = x.shape[0]
    n = cfg.N
    anchor = int(np.floor(u * T))
    start = anchor - n // 2 + 1
    stop = start + n - 1
    if n > length or start < t0 or stop > t0 + length - 1:
        lo, hi = cfg.valid_band(T)
        raise BoundaryError(
            f"segment [{start}, {stop}] for u={u:.4f} leaves observations "
            f"[{t0}, {t0 + length - 1}]; with N={n} and T={T} the valid band is "
            f"u in [{lo:.6f}, {hi:.6f}]"
        )
    rows = x[start - t0:stop - t0 + 1]
    h = cfg.taper.values(np.arange(n) / n)
    return h[:, None] * rows, start


def local_fdft(x, u, omega, cfg, T, t0=1):
    """Local functional DFT at one (u, omega), as a coefficient vector."""
    seg, _ = _segment(x, u, cfg, T, t0)
    s = np.arange(cfg.N)
    return np.exp(-1j * float(omega) * s) @ seg


def local_fdft_grid(x, u, cfg, T, t0=1):
    """Local functional DFTs at all N Fourier frequencies (sorted order)."""
    seg, _ = _segment(x, u, cfg, T, t0)
    return np.fft.fftshift(np.fft.fft(seg, axis=0), axes=0)


def _periodogram_norm(cfg):
    h = cfg.taper.values(np.arange(cfg.N) / cfg.N)
    return TWO_PI * float(np.sum(h * h))


def local_periodogram(x, u, omega, cfg, T, t0=1):
    """Periodogram operator D (x) D / (2 pi H_{2,N}(0)) at one (u, omega)."""
    d = local_fdft(x, u, omega, cfg, T, t0=t0)
    return np.outer(d, np.conj(d)) / _periodogram_norm(cfg)


def local_periodogram_grid(x, u, cfg, T, t0=1):
    """Periodogram operators at all N Fourier frequencies, shape (N, K, K)."""
    d = local_fdft_grid(x, u, cfg, T, t0=t0)
    return d[:, :, None] * np.conj(d[:, None, :]) / _periodogram_norm(cfg)


def _check_resolution(cfg):
    spacing = TWO_PI / cfg.N
    if cfg.b_f <= spacing:
        warnings.warn(
            f"frequency bandwidth {cfg.b_f:.4g} does not exceed the Fourier "
            f"spacing {spacing:.4g}; the weight sum degenerates",
            stacklevel=3,
        )


def _smoothing_weights(cfg, deltas):
    """Normalized kernel weights for wrapped frequency offsets ``deltas``."""
    w = cfg.fkernel.values(wrap_frequency(deltas) / cfg.b_f)
    total = w.sum()
    if total <= 0:
        raise ValueError("no Fourier frequency falls inside the kernel support")
    return w / total


def smooth_estimate(x, u, omega, cfg, T, t0=1):
    """Kernel-smoothed spectral density estimate at one (u, omega).

    Renormalized Riemann sum of periodogram operators over the N Fourier
    frequencies, with circular frequency distances.
    """
    _check_resolution(cfg)
    per = local_periodogram_grid(x, u, cfg, T, t0=t0)
    w = _smoothing_weights(cfg, float(omega) - cfg.omega_grid())
    return np.tensordot(w, per, axes=(0, 0))


def smooth_estimate_grid(x, u, cfg, T, t0=1):
    """Smoothed estimates at all N Fourier frequencies, shape (N, K, K).

    On the Fourier grid the weight sum is a circular convolution, evaluated
    by FFT along the frequency axis.
    """
    _check_resolution(cfg)
    per = local_periodogram_grid(x, u, cfg, T, t0=t0)
    offsets = TWO_PI * np.arange(cfg.N) / cfg.N
    w = _smoothing_weights(cfg, offsets)
    conv = np.fft.ifft(np.fft.fft(per, axis=0) * np.fft.fft(w)[:, None, None], axis=0)
    return conv


def estimate_grid(x, cfg, T, u_grid, omega_grid=None, t0=1, raw=False):
    """Spectral estimates on a (u, omega) product grid.

    Parameters
    ----------
    omega_grid : array_like, optional
        Defaults to the N Fourier frequencies, where the smoother runs as a
        circular convolution; other frequencies fall back to explicit
        weight sums.
    raw : bool
        Return unsmoothed periodogram operators instead (only on the
        Fourier grid).

    Returns
    -------
    SpectralGrid with provenance ``smoothed`` (or ``periodogram``).
    """
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    k = np.asarray(x).shape[1]
    on_fourier = omega_grid is None
    omegas = cfg.omega_grid() if on_fourier else np.atleast_1d(np.asarray(omega_grid, dtype=float))
    values = np.empty((u_grid.size, omegas.size, k, k), dtype=complex)
    for a, u in enumerate(u_grid):
        if raw:
            if not on_fourier:
                raise ValueError("raw periodograms are computed on the Fourier grid only")
            values[a] = local_periodogram_grid(x, u, cfg, T, t0=t0)
        elif on_fourier:
            values[a] = smooth_estimate_grid(x, u, cfg, T, t0=t0)
        else:
            per = local_periodogram_grid(x, u, cfg, T, t0=t0)
            grid = cfg.omega_grid()
            for b, omega in enumerate(omegas):
                w = _smoothing_weights(cfg, omega - grid)
                values[a, b] = np.tensordot(w, per, axes=(0, 0))
    return SpectralGrid(
        u=u_grid, omega=omegas, values=values,
        provenance="periodogram" if raw else "smoothed",
    )


def hermitian_part(mat):
    """Project onto the Hermitian part (numerical symmetrization)."""
    return 0.5 * (mat + adjoint(mat))
