"""Real Fourier basis on [0, 1] and operator algebra on its coefficients.

A function f in the model space is stored as its coefficient vector against
the orthonormal system psi_1 = 1, psi_{2l} = sqrt(2) cos(2 pi l tau),
psi_{2l+1} = sqrt(2) sin(2 pi l tau).  An operator is a K x K complex matrix
M acting on coefficient vectors; its integral kernel is
a(tau, sigma) = sum_{ij} M_ij psi_i(tau) conj(psi_j(sigma)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BasisSpec:
    """Finite real Fourier basis on [0, 1].

    Parameters
    ----------
    size : int
        Number of basis functions K (>= 1).  Columns are ordered
        1, cos, sin, cos, sin, ... with increasing integer frequency.
    """

    size: int = 15

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("basis size must be >= 1")

    def evaluate(self, tau):
        """Evaluate all basis functions at points ``tau``.

        Parameters
        ----------
        tau : array_like
            Points in [0, 1].

        Returns
        -------
        ndarray, shape (len(tau), K)
        """
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        _check_unit_interval(tau, "tau")
        out = np.empty((tau.size, self.size))
        out[:, 0] = 1.0
        for col in range(1, self.size):
            freq = (col + 1) // 2
            phase = 2.0 * np.pi * freq * tau
            if col % 2 == 1:
                out[:, col] = np.sqrt(2.0) * np.cos(phase)
            else:
                out[:, col] = np.sqrt(2.0) * np.sin(phase)
        return out


def _check_unit_interval(x, name):
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")


def adjoint(mat):
    """Adjoint (conjugate transpose) of an operator matrix."""
    return np.conj(np.swapaxes(mat, -1, -2))


def hs_norm(mat):
    """Hilbert-Schmidt norm, equal to the L2 norm of the integral kernel."""
    return float(np.linalg.norm(mat))


def hs_inner(a, b):
    """Hilbert-Schmidt inner product trace(a b*)."""
    return complex(np.sum(a * np.conj(b)))


def op_norm(mat):
    """Operator (spectral) norm: the largest singular value."""
    return float(np.linalg.norm(mat, 2))


def trace_norm(mat):
    """Trace (nuclear) norm: the sum of singular values."""
    return float(np.sum(np.linalg.svd(mat, compute_uv=False)))


def rank_one(f, g):
    """Rank-one operator f (x) g with kernel f(tau) conj(g(sigma))."""
    f = np.asarray(f)
    g = np.asarray(g)
    return np.outer(f, np.conj(g))


def tensor_apply(a, b, c):
    """Apply the tensor-product operator a (x) b to the operator c.

    Uses the identity (a (x) b) c = a c b*, the matrix form of composing the
    kernels a(tau, mu1) conj(b(sigma, mu2)) c(mu1, mu2) by double
    integration over (mu1, mu2).
    """
    return a @ c @ adjoint(b)


def kernel_eval(mat, basis, tau, sigma):
    """Evaluate the integral kernel of ``mat`` at a single point (tau, sigma)."""
    tau = float(tau)
    sigma = float(sigma)
    _check_unit_interval(np.array([tau]), "tau")
    _check_unit_interval(np.array([sigma]), "sigma")
    pt = basis.evaluate([tau])[0]
    ps = basis.evaluate([sigma])[0]
    return complex(pt @ mat @ np.conj(ps))


def kernel_grid(mat, basis, taus, sigmas):
    """Integral kernel of ``mat`` on a product grid.

    Returns
    -------
    ndarray, shape (len(taus), len(sigmas)), complex
        Values a(tau_i, sigma_j).
    """
    pt = basis.evaluate(taus)
    ps = basis.evaluate(sigmas)
    return pt @ mat @ np.conj(ps).T
