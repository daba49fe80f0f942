"""Exact second-order structure of time-varying functional ARMA models.

Conventions.  With B(u, omega) = I - sum_{j=1..m} e^{-i omega j} B_{u,j} and
Phi(u, omega) = I + sum_{l=1..n} e^{-i omega l} Phi_{u,l}, the transfer
operator is

    A(u, omega) = (2 pi)^{-1/2} B(u, omega)^{-1} Phi(u, omega) C_u,

so the time-varying spectral density operator is F(u, omega) =
A(u, omega) C_eps A(u, omega)* with C_eps the innovation covariance; the
factor 1/(2 pi) lives entirely in the transfer operator.  Local
autocovariances pair the filters of the two time points straddling uT, and
their truncated Fourier sum is the finite-T spectral density operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .funspace import adjoint
from .model import choose_ma_order, ma_coefficients

PROVENANCES = ("truth", "wigner_ville", "periodogram", "smoothed")

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SpectralGrid:
    """Operator values on a (u, omega) product grid.

    values[a, b] is the K x K coefficient matrix at (u[a], omega[b]);
    provenance records which pipeline stage produced it.
    """

    u: np.ndarray
    omega: np.ndarray
    values: np.ndarray
    provenance: str

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        values = np.asarray(self.values, dtype=complex)
        if values.shape[:2] != (u.size, omega.size) or values.shape[2] != values.shape[3]:
            raise ValueError("values must have shape (len(u), len(omega), K, K)")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)

    @property
    def dim(self):
        return self.values.shape[-1]

    def at(self, u, omega):
        a = int(np.argmin(np.abs(self.u - u)))
        b = int(np.argmin(np.abs(self.omega - omega)))
        return self.values[a, b]


class TransferSingularError(RuntimeError):
    """AR symbol numerically singular at the requested (u, omega)."""

    def __init__(self, u, omega, cond):
        self.cond = cond
        super().__init__(
            f"AR symbol at u={u:.4f}, omega={omega:.4f} has condition number {cond:.3e}"
        )


def _ar_symbol(model, u, omegas):
    """B(u, omega) stacked over omegas, shape (len(omegas), K, K)."""
    k = model.dim
    omegas = np.asarray(omegas, dtype=float)
    bmat = np.broadcast_to(np.eye(k, dtype=complex), (omegas.size, k, k)).copy()
    for j, curve in enumerate(model.ar, start=1):
        bmat -= np.exp(-1j * omegas * j)[:, None, None] * curve(u)
    return bmat


def _ma_symbol(model, u, omegas):
    """Phi(u, omega) C_u stacked over omegas."""
    k = model.dim
    omegas = np.asarray(omegas, dtype=float)
    phi = np.broadcast_to(np.eye(k, dtype=complex), (omegas.size, k, k)).copy()
    for l, curve in enumerate(model.ma, start=1):
        phi += np.exp(-1j * omegas * l)[:, None, None] * curve(u)
    return phi @ model.c_at(u).astype(complex)


def transfer_batch(model, u, omegas):
    """Transfer operators A(u, omega) over an array of frequencies."""
    bmat = _ar_symbol(model, u, omegas)
    rhs = _ma_symbol(model, u, omegas)
    try:
        sol = np.linalg.solve(bmat, rhs)
    except np.linalg.LinAlgError:
        conds = np.linalg.cond(bmat)
        worst = int(np.argmax(conds))
        raise TransferSingularError(u, float(np.asarray(omegas)[worst]), float(conds[worst]))
    return sol / np.sqrt(TWO_PI)


def transfer_operator(model, u, omega):
    """Transfer operator A(u, omega), with an explicit conditioning check."""
    bmat = _ar_symbol(model, u, [omega])[0]
    cond = float(np.linalg.cond(bmat))
    if not np.isfinite(cond) or cond > 1e12:
        raise TransferSingularError(u, omega, cond)
    rhs = _ma_symbol(model, u, [omega])[0]
    return np.linalg.solve(bmat, rhs) / np.sqrt(TWO_PI)


def true_spectral_density(model, u, omega):
    """Exact spectral density operator F(u, omega) = A C_eps A*."""
    a = transfer_operator(model, u, omega)
    return a @ model.innovations.covariance @ adjoint(a)


def truth_grid(model, u_grid, omega_grid):
    """Exact spectral density operators on a (u, omega) product grid."""
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    k = model.dim
    cov = model.innovations.covariance.astype(complex)
    values = np.empty((u_grid.size, omega_grid.size, k, k), dtype=complex)
    for a, u in enumerate(u_grid):
        amp = transfer_batch(model, u, omega_grid)
        values[a] = amp @ cov @ adjoint(amp)
    return SpectralGrid(u=u_grid, omega=omega_grid, values=values, provenance="truth")


def _straddle_times(u, s, T):
    t1 = int(np.floor(u * T - s / 2.0))
    t2 = int(np.floor(u * T + s / 2.0))
    return t1, t2


def local_autocov(model, u, s, T, lags=None, tol=1e-10):
    """Local autocovariance operator pairing the times straddling uT.

    cov(X_{t2,T}, X_{t1,T}) with t1 = floor(uT - s/2), t2 = floor(uT + s/2);
    the later time comes first, so in the stationary limit this is C_s with
    C_s = B^s C_0 for an AR(1).  Computed from the causal filters of both
    time points: sum_l A_{t2,T}(l) C_eps A_{t1,T}(l + t1 - t2)'.

    Parameters
    ----------
    lags : int, optional
        Filter truncation order; chosen from ``tol`` when omitted.
    """
    if lags is None:
        lags = choose_ma_order(model, T, tol=tol)
    t1, t2 = _straddle_times(u, s, T)
    return _autocov_from_filters(model, t2, t1, T, lags)


def _autocov_from_filters(model, t1, t2, T, lags, cache=None):
    shift = t2 - t1
    c1 = _cached_filters(model, t1, T, lags, cache)
    c2 = _cached_filters(model, t2, T, lags + max(0, shift), cache)
    cov = model.innovations.covariance
    out = np.zeros((model.dim, model.dim))
    for l in range(lags + 1):
        l2 = l + shift
        if l2 < 0 or l2 >= c2.shape[0]:
            continue
        out += c1[l] @ cov @ c2[l2].T
    return out


def _cached_filters(model, t, T, lags, cache):
    if cache is None:
        return ma_coefficients(model, t, T, lags)[0]
    have = cache.get(t)
    if have is None or have.shape[0] < lags + 1:
        cache[t] = ma_coefficients(model, t, T, lags)[0]
    return cache[t]


def autocov_sequence(model, u, T, s_max, lags=None, tol=1e-10):
    """Local autocovariances for s = 0, ..., s_max with shared filter cache."""
    if lags is None:
        lags = choose_ma_order(model, T, tol=tol)
    cache = {}
    full = lags + s_max
    out = np.empty((s_max + 1, model.dim, model.dim))
    for s in range(s_max + 1):
        t1, t2 = _straddle_times(u, s, T)
        _cached_filters(model, t1, T, full, cache)
        _cached_filters(model, t2, T, full, cache)
        out[s] = _autocov_from_filters(model, t2, t1, T, lags, cache)
    return out


def wigner_ville(model, u_grid, omega_grid, T, s_max, lags=None, tol=1e-10):
    """Finite-T spectral density operator from truncated autocovariances.

    (2 pi)^{-1} sum_{|s| <= s_max} C_{u,s} e^{-i omega s}; the negative lags
    enter through C_{u,-s} = C_{u,s}', so the result is Hermitian by
    construction.
    """
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    k = model.dim
    values = np.empty((u_grid.size, omega_grid.size, k, k), dtype=complex)
    for a, u in enumerate(u_grid):
        covs = autocov_sequence(model, u, T, s_max, lags=lags, tol=tol)
        acc = np.broadcast_to(covs[0].astype(complex), (omega_grid.size, k, k)).copy()
        for s in range(1, s_max + 1):
            phase = np.exp(-1j * omega_grid * s)[:, None, None]
            acc += phase * covs[s] + np.conj(phase) * covs[s].T
        values[a] = acc / TWO_PI
    return SpectralGrid(u=u_grid, omega=omega_grid, values=values, provenance="wigner_ville")
