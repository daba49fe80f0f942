"""Time-varying functional ARMA models in coefficient space.

A model of order (m, n) generates, for sample size T, the triangular array

    X_t = sum_{j=1..m} B_{t/T, j} X_{t-j}
          + sum_{l=1..n} Phi_{t/T, l} C_{(t-l)/T} eps_{t-l}
          + C_{t/T} eps_t

where every operator curve is evaluated at rescaled time t/T, clamped to
[0, 1] outside the observation window, and eps_t are independent Gaussian
innovations with diagonal coefficient covariance.

Randomness discipline: every stream is derived from one master seed through
``numpy.random.SeedSequence(seed, spawn_key=key)`` with fixed integer keys,
so model draws, innovations and per-replication streams are independent and
reproducible bit for bit.  Keys: (0, j, g) for the g-th knot of the j-th
random operator curve, (1,) for a simulation's innovations, (2, r) for
replication r of a Monte Carlo run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .funspace import BasisSpec, op_norm

_KEY_MATRIX = 0
_KEY_INNOV = 1
_KEY_REPLICATION = 2

DEFAULT_BURN_IN = 500


def spawn_rng(seed, *key):
    """Generator for the sub-stream of ``seed`` addressed by integer ``key``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def replication_seed_sequence(seed, *index):
    """Seed sequence for the replication addressed by integer ``index``."""
    return np.random.SeedSequence(seed, spawn_key=(_KEY_REPLICATION, *index))


def replication_seed(seed, *index):
    """64-bit master seed for one replication, derived from its sub-stream."""
    return int(replication_seed_sequence(seed, *index).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class OperatorCurve:
    """Operator-valued curve u -> K x K real matrix on [0, 1].

    Piecewise linear between the stored knots; constant outside [u_0, u_G]
    (rescaled times below the first or above the last knot clamp to it).
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or values.ndim != 3 or values.shape[0] != knots.size:
            raise ValueError("need knots (G,) and values (G, K, K)")
        if values.shape[1] != values.shape[2]:
            raise ValueError("curve values must be square matrices")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, mat):
        mat = np.asarray(mat, dtype=float)
        return cls(np.array([0.0]), mat[None, :, :])

    @property
    def dim(self):
        return self.values.shape[1]

    def __call__(self, u):
        """Matrix at rescaled time ``u`` (scalar), clamped to the knot range."""
        return self.batch(np.array([float(u)]))[0]

    def batch(self, us):
        """Matrices at an array of rescaled times, shape (len(us), K, K)."""
        us = np.asarray(us, dtype=float)
        knots = self.knots
        if knots.size == 1:
            return np.broadcast_to(self.values[0], us.shape + self.values[0].shape).copy()
        uc = np.clip(us, knots[0], knots[-1])
        idx = np.clip(np.searchsorted(knots, uc, side="right") - 1, 0, knots.size - 2)
        left = knots[idx]
        width = knots[idx + 1] - knots[idx]
        w = (uc - left) / width
        return (1.0 - w)[:, None, None] * self.values[idx] + w[:, None, None] * self.values[idx + 1]


@dataclass(frozen=True)
class InnovationSpec:
    """Independent Gaussian innovations with diagonal coefficient covariance."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 1 or np.any(sigma < 0):
            raise ValueError("sigma must be a nonnegative vector")
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self):
        return self.sigma.size

    @property
    def covariance(self):
        return np.diag(self.sigma**2)

    def draw(self, rng, count):
        return rng.standard_normal((count, self.dim)) * self.sigma


@dataclass(frozen=True)
class TvFarmaModel:
    """Time-varying functional ARMA model of order (m, n).

    Parameters
    ----------
    ar : tuple of OperatorCurve
        Autoregressive curves B_{., 1}, ..., B_{., m}.
    innovations : InnovationSpec
    ma : tuple of OperatorCurve
        Moving-average curves Phi_{., 1}, ..., Phi_{., n}.
    c : OperatorCurve or None
        Innovation shaping curve C; None means the identity.
    """

    ar: tuple = ()
    innovations: InnovationSpec = field(default_factory=lambda: InnovationSpec(np.ones(1)))
    ma: tuple = ()
    c: OperatorCurve | None = None

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(self.ar))
        object.__setattr__(self, "ma", tuple(self.ma))
        dims = {cv.dim for cv in self.ar + self.ma}
        if self.c is not None:
            dims.add(self.c.dim)
        dims.add(self.innovations.dim)
        if len(dims) != 1:
            raise ValueError("all curves and the innovation spec must share one dimension")

    @property
    def dim(self):
        return self.innovations.dim

    @property
    def ar_order(self):
        return len(self.ar)

    @property
    def ma_order(self):
        return len(self.ma)

    @property
    def basis(self):
        return BasisSpec(self.dim)

    def c_at(self, u):
        if self.c is None:
            return np.eye(self.dim)
        return self.c(u)

    def frozen(self, u):
        """Stationary model with every curve fixed at rescaled time ``u``."""
        return TvFarmaModel(
            ar=tuple(OperatorCurve.constant(cv(u)) for cv in self.ar),
            innovations=self.innovations,
            ma=tuple(OperatorCurve.constant(cv(u)) for cv in self.ma),
            c=None if self.c is None else OperatorCurve.constant(self.c(u)),
        )


def build_companion(model, u):
    """State-space companion matrix of the AR part at rescaled time ``u``.

    Top block row holds B_{u,1}, ..., B_{u,m}; the identity sits on the block
    subdiagonal.  For m = 0 returns the K x K zero matrix.
    """
    k = model.dim
    m = model.ar_order
    if m == 0:
        return np.zeros((k, k))
    comp = np.zeros((m * k, m * k))
    for j, curve in enumerate(model.ar):
        comp[:k, j * k:(j + 1) * k] = curve(u)
    if m > 1:
        comp[k:, :-k] = np.eye((m - 1) * k)
    return comp


@dataclass(frozen=True)
class StabilityReport:
    """Per-u stability diagnostics for the AR part."""

    u: np.ndarray
    norm_sums: np.ndarray
    radii: np.ndarray
    delta: float

    @property
    def sum_criterion(self):
        return self.norm_sums < 1.0

    @property
    def radius_criterion(self):
        return self.radii < 1.0 - self.delta

    @property
    def passed(self):
        # The radius criterion is authoritative; the norm sum is reported
        # because it is the easy sufficient condition.
        return bool(np.all(self.radius_criterion))

    def worst(self):
        i = int(np.argmax(self.radii))
        return float(self.u[i]), float(self.radii[i])


def check_stability(model, u_grid=None, delta=1e-6):
    """Evaluate causality diagnostics of the AR part on a grid of u.

    Reports, per u, the sum of operator norms of the AR curves (sufficient
    condition when < 1) and the spectral radius of the companion matrix
    (authoritative pass criterion: radius < 1 - delta everywhere).
    """
    if u_grid is None:
        u_grid = np.linspace(0.0, 1.0, 65)
    u_grid = np.asarray(u_grid, dtype=float)
    sums = np.empty(u_grid.size)
    radii = np.empty(u_grid.size)
    for i, u in enumerate(u_grid):
        sums[i] = sum(op_norm(cv(u)) for cv in model.ar) if model.ar else 0.0
        comp = build_companion(model, u)
        radii[i] = float(np.max(np.abs(np.linalg.eigvals(comp)))) if model.ar else 0.0
    return StabilityReport(u=u_grid, norm_sums=sums, radii=radii, delta=delta)


class StabilityError(RuntimeError):
    """AR part fails the spectral-radius criterion somewhere on [0, 1]."""


def _require_stable(model):
    report = check_stability(model)
    if not report.passed:
        u, radius = report.worst()
        raise StabilityError(
            f"companion spectral radius {radius:.6f} at u={u:.4f} violates < 1 - {report.delta}"
        )
    return report


def simulate(model, T, seed=0, burn_in=DEFAULT_BURN_IN, t_start=1, t_end=None,
             return_innovations=False, check=True):
    """Simulate the triangular array for sample size T.

    Parameters
    ----------
    model : TvFarmaModel
    T : int
        Sample size fixing the rescaled-time axis t/T.
    seed : int
        Master seed; innovations come from its sub-stream (1,).
    burn_in : int
        Steps simulated before ``t_start`` (curves clamp below u = 0) and
        discarded, so the output has forgotten the zero initial state.
    t_start, t_end : int
        Observation window in absolute time; defaults to [1, T].  A wider
        window extends the same process (curves clamp outside [0, 1]).
    return_innovations : bool
        Also return the innovation draws, rows aligned with
        t = t_start - burn_in, ..., t_end.
    check : bool
        Verify stability first and raise StabilityError on failure.

    Returns
    -------
    ndarray, shape (t_end - t_start + 1, K)
        Coefficient rows for t = t_start, ..., t_end.
    """
    if t_end is None:
        t_end = T
    if t_end < t_start:
        raise ValueError("empty observation window")
    if check and model.ar:
        _require_stable(model)
    k = model.dim
    m = model.ar_order
    n = model.ma_order
    total = burn_in + (t_end - t_start + 1)
    times = np.arange(t_start - burn_in, t_end + 1)
    us = times / float(T)
    rng = spawn_rng(seed, _KEY_INNOV)
    eps = model.innovations.draw(rng, total)

    ar_ops = [cv.batch(us) for cv in model.ar]
    ma_ops = [cv.batch(us) for cv in model.ma]
    if model.c is None:
        shaped = eps
    else:
        c_ops = model.c.batch(us)
        shaped = np.einsum("tij,tj->ti", c_ops, eps)

    if m == 0 and n == 0:
        x = shaped
    else:
        x = np.zeros((total, k))
        for i in range(total):
            acc = shaped[i].copy()
            for j in range(1, m + 1):
                if i - j >= 0:
                    acc += ar_ops[j - 1][i] @ x[i - j]
            for l in range(1, n + 1):
                if i - l >= 0:
                    acc += ma_ops[l - 1][i] @ shaped[i - l]
            x[i] = acc
    out = x[burn_in:]
    if return_innovations:
        return out, eps
    return out


def simulate_frozen(model, u, T, seed=0, burn_in=DEFAULT_BURN_IN, t_start=1, t_end=None):
    """Simulate the stationary process frozen at ``u`` on the same innovations.

    Shares the innovation stream of ``simulate`` with the same seed and
    window, which is what couples the two processes in the local
    stationarity diagnostic.
    """
    return simulate(model.frozen(u), T, seed=seed, burn_in=burn_in,
                    t_start=t_start, t_end=t_end)


def ma_coefficients(model, t, T, lags):
    """Causal moving-average filters A_{t,T}(l) for l = 0, ..., lags.

    For a pure AR model these are the top-left blocks of running products of
    companion matrices at rescaled times t/T, (t-1)/T, ..., composed with the
    shaping operator at (t-l)/T.  With a moving-average part the filters are
    built as impulse responses of the full recursion.

    Returns
    -------
    coeffs : ndarray, shape (lags + 1, K, K)
    tail : float
        Geometric bound on the operator-norm l1 tail sum beyond ``lags``.
    """
    k = model.dim
    m = model.ar_order
    n = model.ma_order
    coeffs = np.empty((lags + 1, k, k))
    if n == 0 and m > 0:
        prod = np.eye(m * k)
        coeffs[0] = model.c_at(t / T)
        for l in range(1, lags + 1):
            prod = prod @ build_companion(model, (t - l + 1) / T)
            coeffs[l] = prod[:k, :k] @ model.c_at((t - l) / T)
    elif m == 0 and n == 0:
        coeffs[:] = 0.0
        coeffs[0] = model.c_at(t / T)
    else:
        for l in range(lags + 1):
            coeffs[l] = _impulse_response(model, t - l, t, T)[-1]
    return coeffs, _ma_tail_bound(model, coeffs, lags)


def _impulse_response(model, r, t, T):
    """Responses at times r, ..., t to a unit innovation entering at time r."""
    k = model.dim
    m = model.ar_order
    n = model.ma_order
    c_r = model.c_at(r / T)
    steps = t - r
    ys = np.zeros((steps + 1, k, k))
    ys[0] = c_r
    for j in range(1, steps + 1):
        u_j = (r + j) / T
        acc = np.zeros((k, k))
        for i in range(1, min(j, m) + 1):
            acc += model.ar[i - 1](u_j) @ ys[j - i]
        if j <= n:
            acc += model.ma[j - 1](u_j) @ c_r
        ys[j] = acc
    return ys


def _ma_tail_bound(model, coeffs, lags):
    if model.ar_order == 0:
        return 0.0
    report = check_stability(model)
    rho = float(np.max(report.radii))
    if rho >= 1.0:
        return np.inf
    # Geometric envelope fit on the last computed filters; the companion
    # radius gives the asymptotic ratio.
    ratio = min(rho + 0.05, 0.999)
    last = max(op_norm(coeffs[l]) for l in range(max(0, lags - model.ar_order), lags + 1))
    return last * ratio / (1.0 - ratio)


def choose_ma_order(model, T, tol=1e-10, t=None, max_lags=100000):
    """Smallest lag count whose reported tail bound falls below ``tol``.

    The filters depend on the anchor time: products walking into the
    clamped region below t = 1 can decay with a longer transient than
    mid-sample ones.  With ``t=None`` the bound is therefore taken as the
    worst case over anchors spread across [1, T].
    """
    if t is None:
        anchors = sorted({1, T // 4, T // 2, (3 * T) // 4, T} - {0})
    else:
        anchors = [t]
    lags = max(4 * model.ar_order + model.ma_order, 8)
    while lags <= max_lags:
        tail = max(ma_coefficients(model, a, T, lags)[1] for a in anchors)
        if tail < tol:
            return lags
        lags *= 2
    raise RuntimeError(f"no truncation below tol={tol} within {max_lags} lags")


def simulate_ma(model, T, innovations, lags, t_start=1, t_end=None, eps_t_start=None):
    """Simulate by the truncated causal moving-average representation.

    Parameters
    ----------
    innovations : ndarray, shape (len, K)
        Innovation rows for consecutive times ending at ``t_end``; the first
        row sits at ``eps_t_start`` (default ``t_end - len + 1``, which
        matches the array produced by ``simulate(..., return_innovations=True)``
        for the same window).
    lags : int
        Truncation order L; innovations older than L steps are dropped.

    Notes
    -----
    Accumulates, for each innovation time r, its forward responses through
    the recursion, which reproduces the filters A_{t,T}(l) without forming
    them per time point.
    """
    if t_end is None:
        t_end = T
    count = t_end - t_start + 1
    k = model.dim
    if eps_t_start is None:
        eps_t_start = t_end - innovations.shape[0] + 1
    x = np.zeros((count, k))
    m = model.ar_order
    n = model.ma_order
    for row in range(innovations.shape[0]):
        r = eps_t_start + row
        horizon = min(t_end, r + lags)
        if horizon < max(r, t_start):
            continue
        c_r = model.c_at(r / T)
        shock = c_r @ innovations[row]
        ys = [shock]
        if r >= t_start:
            x[r - t_start] += shock
        for j in range(1, horizon - r + 1):
            u_j = (r + j) / T
            acc = np.zeros(k)
            for i in range(1, min(j, m) + 1):
                acc = acc + model.ar[i - 1](u_j) @ ys[j - i]
            if j <= n:
                acc = acc + model.ma[j - 1](u_j) @ shock
            ys.append(acc)
            tt = r + j
            if tt >= t_start:
                x[tt - t_start] += acc
    return x


def _normalized_gaussian_curve(seed, curve_key, knots, variance_fn, scale_fn, size):
    """Random operator curve: per-knot Gaussian draw, unit operator norm, scaled."""
    us = np.linspace(0.0, 1.0, knots)
    mats = np.empty((knots, size, size))
    rows = np.arange(1, size + 1)[:, None]
    cols = np.arange(1, size + 1)[None, :]
    for g, u in enumerate(us):
        rng = spawn_rng(seed, _KEY_MATRIX, curve_key, g)
        sd = np.sqrt(variance_fn(u, rows, cols))
        a = rng.standard_normal((size, size)) * sd
        mats[g] = scale_fn(u) * a / op_norm(a)
    return OperatorCurve(us, mats)


def far1(size=15, seed=0, eta=0.4, decay=3, knots=64):
    """First-order preset: one random AR curve with norm ``eta`` at knots.

    Entry (i, j) of the knot draw is Gaussian with variance
    u i^(-2 decay) + (1 - u) exp(-i - j); innovation scales are
    1 / (|l - 1.5| pi).
    """

    def variance(u, i, j):
        return u * i**(-2.0 * decay) + (1.0 - u) * np.exp(-i - j)

    curve = _normalized_gaussian_curve(seed, 1, knots, variance, lambda u: eta, size)
    l = np.arange(1, size + 1)
    sigma = 1.0 / (np.abs(l - 1.5) * np.pi)
    return TvFarmaModel(ar=(curve,), innovations=InnovationSpec(sigma))


def far2(size=15, seed=1, knots=64):
    """Second-order preset with a rescaled-time-dependent spectral peak.

    Lag-1 scale 0.4 cos(1.5 - cos(pi u)), lag-2 scale -0.5; knot draws have
    entry variances exp(-(i-3) - (j-3)) and 1 / (i^4 + j); innovation scales
    are 1 / (|l - 2.65| pi).

    The scalar second-order heuristic puts the amplitude peak at
    ``far2_peak_frequency(u)``; whether a realization shows it there depends
    on the sign of the dominant eigenvalue of the drawn lag-2 operator, so
    the default seed is pinned to a draw that does (at ``size=15``, u=0.5).
    """

    def var1(u, i, j):
        return np.exp(-(i - 3.0) - (j - 3.0))

    def var2(u, i, j):
        return 1.0 / (i**4.0 + j)

    def eta1(u):
        return 0.4 * np.cos(1.5 - np.cos(np.pi * u))

    curve1 = _normalized_gaussian_curve(seed, 1, knots, var1, eta1, size)
    curve2 = _normalized_gaussian_curve(seed, 2, knots, var2, lambda u: -0.5, size)
    l = np.arange(1, size + 1)
    sigma = 1.0 / (np.abs(l - 2.65) * np.pi)
    return TvFarmaModel(ar=(curve1, curve2), innovations=InnovationSpec(sigma))


def far2_peak_frequency(u):
    """Scalar second-order heuristic for the far2 amplitude peak location."""
    return float(np.arccos(0.3 * np.cos(1.5 - np.cos(np.pi * u))))
