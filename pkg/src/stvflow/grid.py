"""Rectangular grids with zero Dirichlet extension and discrete vector calculus.

Fields live on the interior nodes of an axis-aligned rectangle (0,L1)[x(0,L2)];
the boundary value is identically zero and never stored.  The gradient is the
forward difference on faces, including the one-sided differences across the
boundary against the implicit zero value.  The divergence is the exact negative
adjoint of the gradient, so laplacian = divergence(gradient(.)) is the usual
5-point operator with Dirichlet conditions.

All array kernels broadcast over leading batch axes: a (B, n1, n2) input is
treated as B independent fields.  Nothing here mutates its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "LinearSolveError",
    "gradient",
    "divergence",
    "laplacian",
    "resolvent",
    "eigenfunction",
    "norm_p",
    "tv",
]


class LinearSolveError(RuntimeError):
    """Conjugate gradient failed to reach the requested residual."""


@dataclass(frozen=True)
class Grid:
    """Interior-node discretization of a rectangle (0,L1) or (0,L1)x(0,L2).

    counts[i] interior nodes along axis i; spacing h_i = L_i/(counts[i]+1);
    node coordinates xi = h_i, 2 h_i, ..., counts[i] h_i.
    """

    lengths: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        counts = tuple(int(v) for v in self.counts)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "counts", counts)
        if len(lengths) != len(counts):
            raise ValueError("lengths and counts must have equal length")
        if len(lengths) not in (1, 2):
            raise ValueError("only 1D and 2D rectangles are supported")
        if any(L <= 0 for L in lengths):
            raise ValueError("domain lengths must be positive")
        if any(n < 2 for n in counts):
            raise ValueError("need at least 2 interior nodes per axis")

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n + 1) for L, n in zip(self.lengths, self.counts))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def node_count(self) -> int:
        return math.prod(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    def axes(self) -> tuple[np.ndarray, ...]:
        """Interior node coordinates along each axis."""
        return tuple(
            h * np.arange(1, n + 1) for h, n in zip(self.spacing, self.counts)
        )

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Meshgrid ('ij') of node coordinates, one array per axis."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))


@dataclass(frozen=True)
class ScalarField:
    """Node values of a scalar quantity; boundary is implicitly zero."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "ScalarField":
        return cls(grid, np.asarray(f(*grid.coordinates()), dtype=float))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


@dataclass(frozen=True)
class VectorField:
    """Face values of a vector quantity, one component array per axis.

    Axis-i components sit at the forward-difference locations of axis i:
    shape (n1+1,) in 1D, (n1+1, n2) and (n1, n2+1) in 2D.
    """

    grid: Grid
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        expected = face_shapes(self.grid)
        got = tuple(c.shape for c in comps)
        if got != expected:
            raise ValueError(f"component shapes {got} do not match faces {expected}")
        object.__setattr__(self, "components", comps)


def face_shapes(grid: Grid) -> tuple[tuple[int, ...], ...]:
    shapes = []
    for axis in range(grid.dim):
        s = list(grid.counts)
        s[axis] += 1
        shapes.append(tuple(s))
    return tuple(shapes)


# ---------------------------------------------------------------------------
# array kernels (batch-aware; leading axes broadcast)
# ---------------------------------------------------------------------------


def _pad_one(a: np.ndarray, axis: int, before: int, after: int) -> np.ndarray:
    width = [(0, 0)] * a.ndim
    width[axis] = (before, after)
    return np.pad(a, width)


def grad_arrays(values: np.ndarray, grid: Grid) -> tuple[np.ndarray, ...]:
    """Forward differences against the zero extension, per axis, on faces."""
    hs = grid.spacing
    out = []
    for axis_back, h in zip(range(-grid.dim, 0), hs):
        ext = _pad_one(values, axis_back, 1, 1)
        lo = [slice(None)] * values.ndim
        hi = [slice(None)] * values.ndim
        lo[axis_back] = slice(None, -1)
        hi[axis_back] = slice(1, None)
        out.append((ext[tuple(hi)] - ext[tuple(lo)]) / h)
    return tuple(out)


def div_arrays(comps: tuple[np.ndarray, ...], grid: Grid) -> np.ndarray:
    """Negative adjoint of grad_arrays under uniform cell-volume weights."""
    hs = grid.spacing
    out = None
    for comp, axis_back, h in zip(comps, range(-grid.dim, 0), hs):
        lo = [slice(None)] * comp.ndim
        hi = [slice(None)] * comp.ndim
        lo[axis_back] = slice(None, -1)
        hi[axis_back] = slice(1, None)
        term = (comp[tuple(hi)] - comp[tuple(lo)]) / h
        out = term if out is None else out + term
    return out


def lap_arrays(values: np.ndarray, grid: Grid) -> np.ndarray:
    return div_arrays(grad_arrays(values, grid), grid)


def cells_from_components(comps: tuple[np.ndarray, ...], grid: Grid) -> np.ndarray:
    """Collocate per-axis face values into per-cell vectors.

    Cells are indexed by the lower-left node of each forward-difference
    stencil on the zero-extended grid, giving shape (n+1, 1) in 1D and
    (n1+1, n2+1, 2) in 2D.  Positions that pair a face with the structurally
    zero strip of the other axis are filled with zeros.
    """
    if grid.dim == 1:
        return comps[0][..., None]
    p0, p1 = comps
    gx = _pad_one(p0, -1, 1, 0)
    gy = _pad_one(p1, -2, 1, 0)
    return np.stack((gx, gy), axis=-1)


def components_from_cells(cells: np.ndarray, grid: Grid) -> tuple[np.ndarray, ...]:
    """Inverse of cells_from_components; drops the structurally zero pads."""
    if grid.dim == 1:
        return (cells[..., 0],)
    gx = cells[..., 0]
    gy = cells[..., 1]
    return (gx[..., :, 1:], gy[..., 1:, :])


def cell_grad(values: np.ndarray, grid: Grid) -> np.ndarray:
    return cells_from_components(grad_arrays(values, grid), grid)


def _sum_grid_axes(a: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    return a.sum(axis=axes)


def norm_p_arrays(values: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    if p < 1:
        raise ValueError("p must be >= 1")
    vol = grid.cell_volume
    if p == 2:
        return np.sqrt(vol * _sum_grid_axes(values * values, grid))
    return (vol * _sum_grid_axes(np.abs(values) ** p, grid)) ** (1.0 / p)


def l2_inner_arrays(u: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.cell_volume * _sum_grid_axes(u * v, grid)


def face_inner_arrays(
    p: tuple[np.ndarray, ...], q: tuple[np.ndarray, ...], grid: Grid
) -> np.ndarray:
    vol = grid.cell_volume
    total = None
    for a, b in zip(p, q):
        axes = tuple(range(-grid.dim, 0))
        term = vol * (a * b).sum(axis=axes)
        total = term if total is None else total + term
    return total


def cell_magnitude(cells: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(cells * cells, axis=-1))


def tv_arrays(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Total variation of the zero extension.

    Per cell, cell volume times the Euclidean magnitude of the collocated
    forward-difference gradient; boundary-crossing differences are included,
    which realizes the boundary trace of the extension.
    """
    mag = cell_magnitude(cell_grad(values, grid))
    return grid.cell_volume * _sum_grid_axes(mag, grid)


def grad_norm_p_arrays(values: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    """(integral of |grad u|^p)^(1/p) with the per-cell Euclidean magnitude."""
    if p < 1:
        raise ValueError("p must be >= 1")
    mag = cell_magnitude(cell_grad(values, grid))
    if p == 1:
        return grid.cell_volume * _sum_grid_axes(mag, grid)
    return (grid.cell_volume * _sum_grid_axes(mag**p, grid)) ** (1.0 / p)


def shifted_poisson_solve(
    rhs: np.ndarray,
    grid: Grid,
    eps: float,
    rtol: float = 1e-10,
    maxiter: int | None = None,
) -> np.ndarray:
    """Solve (I + eps*A) v = rhs with A = -laplacian, by conjugate gradient.

    The system is symmetric positive definite for eps >= 0.  Batched right
    hand sides are solved simultaneously; convergence requires every batch
    element to reach ||residual|| <= rtol*||rhs||.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    rhs = np.asarray(rhs, dtype=float)
    if eps == 0.0:
        return rhs.copy()
    if maxiter is None:
        maxiter = 10 * grid.node_count

    def apply(v):
        return v - eps * lap_arrays(v, grid)

    def dots(a, b):
        return _sum_grid_axes(a * b, grid)

    expand = (Ellipsis,) + (None,) * grid.dim

    x = rhs.copy()
    r = rhs - apply(x)
    d = r.copy()
    rr = dots(r, r)
    bb = dots(rhs, rhs)
    tol_sq = (rtol * rtol) * bb
    tiny = np.finfo(float).tiny
    for _ in range(maxiter):
        if np.all(rr <= tol_sq):
            return x
        ad = apply(d)
        dad = dots(d, ad)
        alpha = np.where(dad > tiny, rr / np.where(dad > tiny, dad, 1.0), 0.0)
        x = x + np.asarray(alpha)[expand] * d
        r = r - np.asarray(alpha)[expand] * ad
        rr_new = dots(r, r)
        beta = np.where(rr > tiny, rr_new / np.where(rr > tiny, rr, 1.0), 0.0)
        d = r + np.asarray(beta)[expand] * d
        rr = rr_new
    if np.all(rr <= tol_sq):
        return x
    raise LinearSolveError(
        f"conjugate gradient did not converge in {maxiter} iterations "
        f"(worst relative residual {float(np.max(np.sqrt(rr / np.maximum(bb, tiny)))):.3e})"
    )


# ---------------------------------------------------------------------------
# field-level operations
# ---------------------------------------------------------------------------


def gradient(u: ScalarField) -> VectorField:
    """Forward-difference gradient with one-sided boundary differences."""
    return VectorField(u.grid, grad_arrays(u.values, u.grid))


def divergence(p: VectorField) -> ScalarField:
    """Exact negative adjoint of gradient: <grad u, p> = -<u, div p>."""
    return ScalarField(p.grid, div_arrays(p.components, p.grid))


def laplacian(u: ScalarField) -> ScalarField:
    return divergence(gradient(u))


def resolvent(u: ScalarField, eps: float, rtol: float = 1e-10) -> ScalarField:
    """(I + eps*(-laplacian))^(-1) u, a discrete L2 contraction."""
    return ScalarField(u.grid, shifted_poisson_solve(u.values, u.grid, eps, rtol=rtol))


def eigenfunction(grid: Grid, index) -> tuple[ScalarField, float]:
    """Dirichlet Laplacian eigenfunction sampled at nodes, and its eigenvalue.

    Returns the product of sqrt(2/L_i)*sin(k_i*pi*xi_i/L_i) factors together
    with the continuum eigenvalue sum((k_i*pi/L_i)^2).  The samples follow the
    continuum L2 normalization (the discrete norm tends to 1 as h -> 0).
    """
    ks = _validate_index(grid, index)
    axes = grid.axes()
    vals = None
    for k, x, L in zip(ks, axes, grid.lengths):
        factor = math.sqrt(2.0 / L) * np.sin(k * math.pi * x / L)
        vals = factor if vals is None else np.multiply.outer(vals, factor)
    lam = sum((k * math.pi / L) ** 2 for k, L in zip(ks, grid.lengths))
    return ScalarField(grid, vals), lam


def discrete_eigenvalue(grid: Grid, index) -> float:
    """Eigenvalue of the discrete operator -div(grad .) for the same modes."""
    ks = _validate_index(grid, index)
    total = 0.0
    for k, h, L in zip(ks, grid.spacing, grid.lengths):
        total += (4.0 / h**2) * math.sin(k * math.pi * h / (2.0 * L)) ** 2
    return total


def _validate_index(grid: Grid, index) -> tuple[int, ...]:
    if np.isscalar(index):
        ks = (int(index),)
    else:
        ks = tuple(int(k) for k in index)
    if len(ks) != grid.dim:
        raise ValueError(f"mode index must have {grid.dim} components")
    if any(k < 1 for k in ks):
        raise ValueError("mode index components must be >= 1")
    return ks


def norm_p(u: ScalarField, p: float) -> float:
    return float(norm_p_arrays(u.values, u.grid, p))


def tv(u: ScalarField) -> float:
    return float(tv_arrays(u.values, u.grid))


def stable_dt(grid: Grid, lam: float) -> float:
    """Largest explicit step: h_min^2 * lam / (2 * dim * (1 + lam)).

    The regularized flux has Lipschitz constant (1+lam)/lam on cell
    gradients, so this keeps the explicit scheme in the monotone regime.
    """
    h_min = min(grid.spacing)
    return h_min**2 * lam / (2.0 * grid.dim * (1.0 + lam))
