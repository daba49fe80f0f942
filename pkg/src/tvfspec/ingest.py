"""Discrete functional data ingestion and the on-disk formats.

Functions observed on a grid enter as ``RawSeries`` and leave as basis
coefficient rows via least-squares projection (the fit residual is always
reported, never hidden).  Everything the pipeline writes is versioned,
deterministic, delimited text: series files, spectral grid tables (coefficient
or rendered-kernel layout), model documents (JSON), and evaluation reports.
All floats are written with 17 significant digits so write -> read round trips
are exact for float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .funspace import BasisSpec, kernel_grid
from .model import InnovationSpec, OperatorCurve, TvFarmaModel
from .spectrum import PROVENANCES, SpectralGrid

SERIES_HEADER = "# tvfspec series v1"
GRID_HEADERS = {
    "coeff": "# tvfspec spectral-grid coeff v1",
    "kernel": "# tvfspec spectral-grid kernel v1",
}
MODEL_FORMAT = "tvfspec-model"
MODEL_VERSION = 1


class ParseError(ValueError):
    """Malformed input file; message names the file and 1-based line."""

    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


def _fmt(values):
    return ",".join("%.17g" % v for v in values)


@dataclass(frozen=True)
class RawSeries:
    """Functional observations sampled on a shared grid.

    ``grid`` holds M strictly increasing points in [0, 1]; ``data`` is the
    T x M matrix whose row t is X_t on that grid.  Missing entries are out
    of scope, so everything must be finite.
    """

    grid: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        data = np.asarray(self.data, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must hold at least two points")
        if np.any(grid < 0.0) or np.any(grid > 1.0):
            raise ValueError("grid points must lie in [0, 1]")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid points must be strictly increasing")
        if data.ndim != 2 or data.shape[1] != grid.size:
            raise ValueError(
                f"data must be T x {grid.size} to match the grid, got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("data contains non-finite entries")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "data", data)

    @property
    def length(self):
        return self.data.shape[0]


@dataclass(frozen=True)
class ProjectionResult:
    """Basis coefficients plus the per-row L2 fit residual."""

    coefficients: np.ndarray
    residuals: np.ndarray


def project_to_basis(raw, basis, method="lstsq"):
    """Project each observed row onto the span of the basis on the grid.

    ``lstsq`` (default) solves the per-row least-squares problem against the
    basis evaluated on the grid and is exact for data in the span; the
    ``quadrature`` alternative takes trapezoid inner products, which is only
    as good as the grid is dense and uniform.  Returns a ``ProjectionResult``
    whose residuals are L2 norms of data minus fit (trapezoid rule on the
    grid), so in-span data shows residuals at rounding level.
    """
    design = basis.evaluate(raw.grid)
    m, k = design.shape
    if m < k:
        raise ValueError(
            f"under-determined projection: {m} grid points for {k} basis functions"
        )
    if method == "lstsq":
        coeffs = np.linalg.lstsq(design, raw.data.T, rcond=None)[0].T
    elif method == "quadrature":
        coeffs = np.trapezoid(
            raw.data[:, :, None] * design[None, :, :], raw.grid, axis=1
        )
    else:
        raise ValueError(f"unknown projection method {method!r}")
    resid = raw.data - coeffs @ design.T
    residuals = np.sqrt(np.trapezoid(resid**2, raw.grid, axis=1))
    return ProjectionResult(coefficients=coeffs, residuals=residuals)


def write_series(raw, path):
    """Write a versioned delimited-text series file: grid row, then data rows."""
    with open(path, "w") as fh:
        fh.write(SERIES_HEADER + "\n")
        fh.write(_fmt(raw.grid) + "\n")
        for row in raw.data:
            fh.write(_fmt(row) + "\n")


def _numeric_row(path, number, line, width=None):
    parts = line.split(",")
    if width is not None and len(parts) != width:
        raise ParseError(path, number, f"expected {width} fields, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ParseError(path, number, f"non-numeric field in {line!r}") from None


def read_series(path):
    """Parse a series file back into a ``RawSeries``; errors name the line."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(path, 1, "empty file, expected a header line")
    if lines[0].strip() != SERIES_HEADER:
        raise ParseError(path, 1, f"expected header {SERIES_HEADER!r}")
    if len(lines) < 3:
        raise ParseError(path, len(lines) + 1, "missing grid or data rows")
    grid = _numeric_row(path, 2, lines[1])
    rows = [
        _numeric_row(path, number, line, width=grid.size)
        for number, line in enumerate(lines[2:], start=3)
    ]
    try:
        return RawSeries(grid=grid, data=np.vstack(rows))
    except ValueError as exc:
        raise ParseError(path, 2, str(exc)) from None


def render_grid(count=64):
    """Default uniform [0, 1] render axis for kernel-layout output."""
    return np.linspace(0.0, 1.0, count)


def write_spectral_grid(grid, path, mode="coeff", basis=None, taus=None, sigmas=None):
    """Write a spectral grid as long-format delimited text.

    ``coeff`` rows are (u, omega, i, j, Re, Im) over the stored basis
    coefficients, zero-based indices.  ``kernel`` rows are
    (u, omega, tau, sigma, Re, Im, abs) with the operator rendered as a
    kernel on a tau x sigma grid (default 64 x 64 uniform); the abs column
    is the amplitude surface contour plots display.  Rows are emitted in
    nested (u, omega, first index, second index) order, one u at a time.
    """
    if mode not in GRID_HEADERS:
        raise ValueError(f"unknown grid mode {mode!r}")
    if mode == "kernel":
        if basis is None:
            basis = BasisSpec(size=grid.values.shape[-1])
        taus = render_grid() if taus is None else np.asarray(taus, dtype=float)
        sigmas = taus if sigmas is None else np.asarray(sigmas, dtype=float)
    dim = grid.values.shape[-1]
    with open(path, "w") as fh:
        fh.write(GRID_HEADERS[mode] + "\n")
        fh.write(
            f"# u {grid.u.size} omega {grid.omega.size} dim {dim} "
            f"provenance {grid.provenance}\n"
        )
        for iu, u in enumerate(grid.u):
            for iw, omega in enumerate(grid.omega):
                mat = grid.values[iu, iw]
                if mode == "coeff":
                    for i in range(dim):
                        for j in range(dim):
                            z = mat[i, j]
                            fh.write(
                                "%.17g,%.17g,%d,%d,%.17g,%.17g\n"
                                % (u, omega, i, j, z.real, z.imag)
                            )
                else:
                    ker = kernel_grid(mat, basis, taus, sigmas)
                    for i, tau in enumerate(taus):
                        for j, sigma in enumerate(sigmas):
                            z = ker[i, j]
                            fh.write(
                                "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                                % (u, omega, tau, sigma, z.real, z.imag, abs(z))
                            )


def _grid_meta(path, line):
    parts = line.lstrip("# ").split()
    # layout: u <nu> omega <nw> dim <K> provenance <name>
    try:
        meta = dict(zip(parts[0::2], parts[1::2]))
        return int(meta["u"]), int(meta["omega"]), int(meta["dim"]), meta["provenance"]
    except (KeyError, ValueError, IndexError):
        raise ParseError(path, line=2, reason=f"bad metadata line {line!r}") from None


def read_spectral_grid(path):
    """Read a coeff-layout grid file back into a ``SpectralGrid``."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(path, 1, "empty file, expected a header line")
    if lines[0].strip() != GRID_HEADERS["coeff"]:
        raise ParseError(path, 1, f"expected header {GRID_HEADERS['coeff']!r}")
    if len(lines) < 2 or not lines[1].startswith("#"):
        raise ParseError(path, 2, "missing metadata line")
    nu, nw, dim, provenance = _grid_meta(path, lines[1])
    if provenance not in PROVENANCES:
        raise ParseError(path, 2, f"unknown provenance {provenance!r}")
    expected = nu * nw * dim * dim
    if len(lines) - 2 != expected:
        raise ParseError(
            path, len(lines), f"expected {expected} data rows, got {len(lines) - 2}"
        )
    u = np.empty(nu)
    omega = np.empty(nw)
    values = np.empty((nu, nw, dim, dim), dtype=complex)
    per_omega = dim * dim
    per_u = nw * per_omega
    for number, line in enumerate(lines[2:], start=3):
        row = _numeric_row(path, number, line, width=6)
        flat = number - 3
        iu, rest = divmod(flat, per_u)
        iw, rest = divmod(rest, per_omega)
        i, j = divmod(rest, dim)
        if (int(row[2]), int(row[3])) != (i, j):
            raise ParseError(path, number, "rows out of nested (u, omega, i, j) order")
        u[iu] = row[0]
        omega[iw] = row[1]
        values[iu, iw, i, j] = row[4] + 1j * row[5]
    return SpectralGrid(u=u, omega=omega, values=values, provenance=provenance)


def read_kernel_table(path):
    """Read a kernel-layout grid file as a plain (rows, 7) float array."""
    with open(path) as fh:
        first = fh.readline().strip()
    if first != GRID_HEADERS["kernel"]:
        raise ParseError(path, 1, f"expected header {GRID_HEADERS['kernel']!r}")
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


def _curve_doc(curve):
    return {
        "knots": curve.knots.tolist(),
        "values": [mat.ravel().tolist() for mat in curve.values],
    }


def _curve_from_doc(doc, dim):
    knots = np.asarray(doc["knots"], dtype=float)
    values = np.array(
        [np.asarray(mat, dtype=float).reshape(dim, dim) for mat in doc["values"]]
    )
    return OperatorCurve(knots=knots, values=values)


def model_document(model, seed=None):
    """JSON-ready dict for a model: orders, knots, row-major matrices, sigma."""
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dim": model.dim,
        "ar_order": model.ar_order,
        "ma_order": model.ma_order,
        "ar": [_curve_doc(c) for c in model.ar],
        "ma": [_curve_doc(c) for c in model.ma],
        "c": None if model.c is None else _curve_doc(model.c),
        "sigma": model.innovations.sigma.tolist(),
        "seed": seed,
    }


def write_model(model, path, seed=None):
    with open(path, "w") as fh:
        json.dump(model_document(model, seed=seed), fh, indent=2, sort_keys=True)
        fh.write("\n")


def model_from_document(doc):
    """Rebuild a ``TvFarmaModel`` from its document; returns (model, seed)."""
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')!r}")
    dim = int(doc["dim"])
    ar = tuple(_curve_from_doc(c, dim) for c in doc["ar"])
    ma = tuple(_curve_from_doc(c, dim) for c in doc["ma"])
    c = doc.get("c")
    model = TvFarmaModel(
        ar=ar,
        ma=ma,
        c=None if c is None else _curve_from_doc(c, dim),
        innovations=InnovationSpec(np.asarray(doc["sigma"], dtype=float)),
    )
    if model.ar_order != int(doc["ar_order"]) or model.ma_order != int(doc["ma_order"]):
        raise ValueError("declared orders disagree with the stored curves")
    return model, doc.get("seed")


def read_model(path):
    """Read a model document; returns (model, seed)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, exc.msg) from None
    return model_from_document(doc)


def write_report(report, path):
    """Write an evaluation report as deterministic JSON."""
    with open(path, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
