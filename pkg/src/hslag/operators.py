"""Assembly and spectral analysis of the linearized stationarity operator.

The operator is the Hessian of the discrete graph-volume functional at the
model critical point (equivalently, the linearization of the volume-gradient
residual at the zero graph).  For the torus model it is assembled column by
column by complex-step differentiation of the exact discrete gradient, so the
matrix is the Hessian of the actual discrete functional to machine precision
-- symmetric by construction up to roundoff, with no step-size error.  For the
circle-sphere quotient model the operator is constant-coefficient and is
realized as a Fourier multiplier acting on the even (deck-invariant) modes.

The analytic references: on the flat torus with radii a the operator acts on
the mode exp(i k.theta) by

    lam(k) = (sum_j k_j^2/a_j^2)^2 - sum_j k_j^2/a_j^4
             + 2 sum_{j<l} k_j k_l / (a_j^2 a_l^2),

and on the circle-sphere model (generalized n, sphere harmonic degree l) by
(k^2 + lam_l - n)^2 + n^2 (k^2 - 1) with lam_l = l(l+n-2).  Both have
seven-dimensional kernels in the default configurations, spanned by the
restrictions of the ambient moment polynomials (rigidity), and nonnegative
spectra (stability).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    OperatorSymmetryError,
    SpectralGapError,
    UnsupportedModelError,
)
from .geomcore import GridDescriptor, ScalarField, l2_inner, l2_norm
from .models import CircleSphereModel, TorusModel
from .weinstein import WeinsteinChart, graph_volume_and_gradient

__all__ = [
    "GridOperator",
    "SpectralData",
    "assemble_flat_operator",
    "assemble_perturbed_operator",
    "assemble_by_finite_differences",
    "band_limited_basis",
    "torus_multiplier",
    "eigensolve",
    "kernel_basis",
    "zero_mean_kernel_basis",
    "project_out_kernel",
    "stability_check",
    "StabilityVerdict",
    "second_variation_consistency",
    "operator_distance",
    "DENSE_NODE_LIMIT",
]

_CS_STEP = 1e-100
DENSE_NODE_LIMIT = 48 * 48


@dataclass
class GridOperator:
    """Dense self-adjoint operator on grid fields with a constant measure weight.

    basis_matrix maps basis coefficients to node values (identity for plain
    grids; the deck-invariant pair basis on quotient grids).  The L^2 measure
    is weight * sum over nodes, with constant weight (the model volume
    densities are constant), so self-adjointness is plain matrix symmetry.
    """

    grid: GridDescriptor
    matrix: np.ndarray
    weight: float
    basis_matrix: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_node_values(self, coeffs: np.ndarray) -> np.ndarray:
        vec = coeffs if self.basis_matrix is None else self.basis_matrix @ coeffs
        return vec.reshape(self.grid.sizes)

    def from_node_values(self, values: np.ndarray) -> np.ndarray:
        vec = np.asarray(values).reshape(-1)
        return vec if self.basis_matrix is None else self.basis_matrix.T @ vec

    def apply(self, f: ScalarField) -> ScalarField:
        coeffs = self.matrix @ self.from_node_values(f.values)
        return ScalarField(self.grid, self.to_node_values(coeffs), check=False)

    def rayleigh(self, f: ScalarField) -> float:
        return l2_inner(f, self.apply(f)) / l2_inner(f, f)

    def asymmetry(self) -> float:
        scale = max(float(np.max(np.abs(self.matrix))), 1e-300)
        return float(np.max(np.abs(self.matrix - self.matrix.T))) / scale

    def symmetrized(self, tol: float = 1e-8) -> "GridOperator":
        rel = self.asymmetry()
        if rel > tol:
            raise OperatorSymmetryError(
                f"assembled operator asymmetric at relative level {rel:.3e}"
            )
        return GridOperator(
            self.grid, 0.5 * (self.matrix + self.matrix.T), self.weight, self.basis_matrix
        )


def band_limited_basis(
    grid: GridDescriptor, columns: Optional[np.ndarray] = None
) -> Optional[np.ndarray]:
    """Orthonormal basis (nodes x dim) of the Nyquist-free part of a subspace.

    On an even grid the spectral derivative zeroes the unpaired Nyquist mode,
    so fields with frequency N/2 along any axis see a truncated symbol: modes
    whose non-Nyquist part lies in the operator kernel would appear spuriously
    flat.  Grid operators therefore act on the faithfully represented band
    |k_j| < N_j/2.  With columns given, returns a basis of the band-limited
    part of their span (the deck-invariant pair space on quotient grids);
    otherwise of the full band.  Returns None when nothing is cut.
    """
    mask_1d = []
    any_cut = False
    for size in grid.sizes:
        m = np.ones(size, dtype=bool)
        if size % 2 == 0:
            m[size // 2] = False
            any_cut = True
        mask_1d.append(m)
    if not any_cut and columns is None:
        return None
    mask = mask_1d[0]
    for m in mask_1d[1:]:
        mask = np.logical_and.outer(mask, m)
    if columns is None:
        columns = np.eye(grid.num_nodes)
    stack = columns.reshape(grid.sizes + (columns.shape[1],))
    axes = tuple(range(grid.dim))
    spec = np.fft.fftn(stack, axes=axes)
    spec *= mask[..., None]
    masked = np.fft.ifftn(spec, axes=axes).real.reshape(grid.num_nodes, -1)
    u, s, _ = np.linalg.svd(masked, full_matrices=False)
    # The deck translation and the Nyquist mask commute, so singular values
    # are exactly 1 (kept mode pairs) or 0 (cut); 0.5 is a safe threshold.
    return np.ascontiguousarray(u[:, s > 0.5])


def torus_multiplier(radii: Sequence[float], modes: np.ndarray) -> np.ndarray:
    """Analytic symbol of the flat-torus operator on exp(i k.theta)."""
    a2 = np.array([a * a for a in radii])
    k = np.asarray(modes, dtype=float)
    lap = np.sum(k**2 / a2, axis=-1)
    corr = np.sum(k**2 / a2**2, axis=-1)
    cross = (np.sum(k / a2, axis=-1) ** 2 - np.sum(k**2 / a2**2, axis=-1))
    return lap**2 - corr + cross


def _torus_flat_weight(model: TorusModel) -> float:
    grid = model.grid()
    return grid.node_weight() * float(np.prod(model.radii))


def assemble_flat_operator(model) -> GridOperator:
    """The linearized operator of the model at its stationary configuration."""
    if isinstance(model, TorusModel):
        chart = WeinsteinChart(model.radii)
        grid = model.grid()
        op = _assemble_graph_hessian(chart, grid, metric=None)
        return op.symmetrized()
    if isinstance(model, CircleSphereModel):
        return _assemble_circle_sphere_operator(model).symmetrized()
    raise UnsupportedModelError(f"no flat operator assembly for {type(model).__name__}")


def _assemble_graph_hessian(chart: WeinsteinChart, grid: GridDescriptor, metric) -> GridOperator:
    """Hessian of the graph volume at f = 0 by complex-step columns.

    Column k is Im P(i eta e_k)/eta, the exact directional derivative of the
    volume-gradient residual along the k-th node indicator (no step error:
    all operations in the residual are analytic in the field values).
    """
    nn = grid.num_nodes
    f = np.zeros(grid.sizes, dtype=complex)
    cols = np.empty((nn, nn))
    flat = f.reshape(-1)
    for k in range(nn):
        flat[k] = 1j * _CS_STEP
        _, P = graph_volume_and_gradient(chart, grid, f, metric)
        cols[:, k] = (P.imag / _CS_STEP).reshape(-1)
        flat[k] = 0.0
    weight = grid.node_weight() * chart.flat_density()
    basis = band_limited_basis(grid)
    if basis is not None:
        cols = basis.T @ cols @ basis
    return GridOperator(grid, cols, weight, basis_matrix=basis)


def assemble_perturbed_operator(chart: WeinsteinChart, grid: GridDescriptor, metric) -> GridOperator:
    """Linearization of the scaled-metric residual at the zero graph."""
    return _assemble_graph_hessian(chart, grid, metric).symmetrized()


def assemble_by_finite_differences(
    chart: WeinsteinChart, grid: GridDescriptor, metric=None, step: float = 1e-4
) -> GridOperator:
    """Richardson-extrapolated central-difference assembly (cross-check path).

    Columns combine central differences at steps h and h/2 to cancel the
    O(h^2) truncation term; used to validate the complex-step assembly.
    """
    nn = grid.num_nodes
    cols = np.empty((nn, nn))
    f = np.zeros(grid.sizes)
    flat = f.reshape(-1)

    def residual():
        _, P = graph_volume_and_gradient(chart, grid, f, metric)
        return P.reshape(-1)

    for k in range(nn):
        estimates = []
        for h in (step, step / 2):
            flat[k] = h
            plus = residual()
            flat[k] = -h
            minus = residual()
            flat[k] = 0.0
            estimates.append((plus - minus) / (2 * h))
        cols[:, k] = (4 * estimates[1] - estimates[0]) / 3
    weight = grid.node_weight() * chart.flat_density()
    basis = band_limited_basis(grid)
    if basis is not None:
        cols = basis.T @ cols @ basis
    return GridOperator(grid, cols, weight, basis_matrix=basis).symmetrized(tol=1e-6)


def _quotient_pair_basis(grid: GridDescriptor) -> np.ndarray:
    """Columns (e_q + e_{Tq})/sqrt(2) over deck orbits of the quotient grid."""
    shift = grid.quotient_shift()
    nn = grid.num_nodes
    idx = np.arange(nn).reshape(grid.sizes)
    tidx = np.roll(idx, shift, axis=tuple(range(grid.dim))).reshape(-1)
    seen = np.zeros(nn, dtype=bool)
    cols = []
    for q in range(nn):
        if seen[q]:
            continue
        seen[q] = True
        tq = tidx[q]
        col = np.zeros(nn)
        if tq == q:
            col[q] = 1.0
        else:
            seen[tq] = True
            col[q] = col[tq] = 1.0 / np.sqrt(2.0)
        cols.append(col)
    return np.stack(cols, axis=1)


def _assemble_circle_sphere_operator(model: CircleSphereModel) -> GridOperator:
    """Constant-coefficient operator of the circle-sphere model (n = 2 grid).

    Acts on exp(i(k s + l phi)) by (k^2+l^2)^2 - 2n(k^2+l^2) + n^2 k^2,
    realized in Fourier space and restricted to the deck-invariant pair basis.
    """
    grid = model.grid()
    n = model.n
    k1 = np.fft.fftfreq(grid.sizes[0], d=1.0 / grid.sizes[0])
    k2 = np.fft.fftfreq(grid.sizes[1], d=1.0 / grid.sizes[1])
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    lap = K1**2 + K2**2
    symbol = lap**2 - 2 * n * lap + n**2 * K1**2
    basis = band_limited_basis(grid, _quotient_pair_basis(grid))
    nb = basis.shape[1]
    mat = np.empty((nb, nb))
    for j in range(nb):
        vals = basis[:, j].reshape(grid.sizes)
        out = np.fft.ifftn(symbol * np.fft.fftn(vals)).real
        mat[:, j] = basis.T @ out.reshape(-1)
    return GridOperator(grid, mat, grid.node_weight(), basis_matrix=basis)


@dataclass
class SpectralData:
    operator: GridOperator
    eigenvalues: np.ndarray
    eigenfields: list
    kernel_tol: float = 1e-5
    gap_ratio: float = 100.0

    def kernel_size(self) -> int:
        k = int(np.sum(np.abs(self.eigenvalues) < self.kernel_tol))
        if k < len(self.eigenvalues):
            nxt = float(np.abs(self.eigenvalues[k]))
            if nxt < self.gap_ratio * self.kernel_tol:
                raise SpectralGapError(
                    f"no clear spectral gap: |lambda_{k}| = {nxt:.3e} "
                    f"< {self.gap_ratio} * {self.kernel_tol}"
                )
        return k


def eigensolve(op: GridOperator, count: Optional[int] = None, symmetry_tol: float = 1e-8) -> SpectralData:
    """Lowest eigenpairs of a self-adjoint grid operator.

    Dense symmetric solve when the grid has at most 48^2 nodes, shift-invert
    Lanczos around the bottom of the spectrum otherwise.  Eigenfields are
    returned L^2-orthonormalized against the model volume weight.
    """
    if op.asymmetry() > symmetry_tol:
        raise OperatorSymmetryError("operator asymmetric beyond tolerance; refusing eigensolve")
    A = 0.5 * (op.matrix + op.matrix.T)
    if op.grid.num_nodes <= DENSE_NODE_LIMIT:
        w, V = np.linalg.eigh(A)
        if count is not None:
            w, V = w[:count], V[:, :count]
    else:
        if count is None:
            raise ValueError("iterative eigensolve requires an explicit count")
        w, V = scipy.sparse.linalg.eigsh(A, k=count, sigma=-1e-3, which="LM")
        order = np.argsort(w)
        w, V = w[order], V[:, order]
    fields = []
    for i in range(V.shape[1]):
        vals = op.to_node_values(V[:, i])
        fld = ScalarField(op.grid, vals, check=False)
        fields.append(ScalarField(op.grid, vals / l2_norm(fld), check=False))
    return SpectralData(op, np.asarray(w, dtype=float), fields)


def kernel_basis(spec: SpectralData) -> list:
    """Orthonormal basis of the numerical kernel (gap-checked)."""
    return spec.eigenfields[: spec.kernel_size()]


def zero_mean_kernel_basis(spec: SpectralData) -> list:
    """Orthonormal basis of the zero-mean part of the kernel (dim kernel - 1)."""
    kernel = kernel_basis(spec)
    grid = spec.operator.grid
    mat = np.stack([b.values.reshape(-1) - np.mean(b.values) for b in kernel], axis=1)
    q, r = np.linalg.qr(mat)
    keep = np.abs(np.diag(r)) > 1e-10 * max(1.0, np.abs(r[0, 0]))
    q = q[:, keep]
    out = []
    for i in range(q.shape[1]):
        fld = ScalarField(grid, q[:, i].reshape(grid.sizes), check=False)
        out.append(ScalarField(grid, fld.values / l2_norm(fld), check=False))
    return out


def project_out_kernel(f: ScalarField, basis: Sequence[ScalarField]) -> ScalarField:
    out = f.values.astype(float).copy()
    for b in basis:
        out -= l2_inner(ScalarField(f.grid, out, check=False), b) * b.values
    return ScalarField(f.grid, out, check=False)


@dataclass
class StabilityVerdict:
    stable: bool
    min_eigenvalue: float
    tolerance: float


def stability_check(spec: SpectralData, tol: float = 1e-5) -> StabilityVerdict:
    mn = float(np.min(spec.eigenvalues))
    return StabilityVerdict(stable=mn >= -tol, min_eigenvalue=mn, tolerance=tol)


def second_variation_consistency(
    model: TorusModel, f: ScalarField, op: Optional[GridOperator] = None, step: float = 1e-3
) -> tuple[float, float]:
    """(5-point FD second derivative of Vol along the graph ray, <Lf, f>)."""
    if op is None:
        op = assemble_flat_operator(model)
    chart = WeinsteinChart(model.radii)
    grid = f.grid

    def vol(s: float) -> float:
        v, _ = graph_volume_and_gradient(chart, grid, s * f.values, None, need_gradient=False)
        return float(v.real)

    e = step
    fd2 = (-vol(2 * e) + 16 * vol(e) - 30 * vol(0.0) + 16 * vol(-e) - vol(-2 * e)) / (12 * e * e)
    # The Hessian form lives in L^2 of the model volume measure, i.e. the
    # operator's weight (node weight times the flat density), not the bare
    # coordinate measure used by l2_inner.
    fv = f.values.reshape(-1)
    quad = float(fv @ op.apply(f).values.reshape(-1)) * op.weight
    return fd2, quad


def operator_distance(op_a: GridOperator, op_b: GridOperator) -> float:
    """Spectral-norm distance between two operators on the same grid/basis."""
    diff = op_a.matrix - op_b.matrix
    diff = 0.5 * (diff + diff.T)
    return float(np.max(np.abs(np.linalg.eigvalsh(diff))))
