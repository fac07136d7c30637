"""Spatially informed principal components for seeding CP factor matrices.

Pipeline: each location's daily series is compressed to Fourier
coefficients, the per-location coefficient rows are coupled through a
row-normalized neighborhood weight matrix, and the eigenvectors of the
resulting symmetric operator yield spatial score columns. Those scores
seed the spatial factor of an alternating-least-squares CP run; the
variable factor starts at all-ones and the temporal factor is completed by
one ridge least-squares solve.

The coefficient matrix is oriented locations-by-features (J rows) because
the weight matrix couples locations; eigenvalues of the operator can be of
either sign, and the most positively autocorrelated (spatially smooth)
components are taken first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .io import GridSpec
from .tensor import DenseTensor3, khatri_rao, unfold

__all__ = [
    "FourierBasis",
    "FunctionalCoefficients",
    "SpatialWeights",
    "StpcaOptions",
    "StpcaResult",
    "build_fourier_basis",
    "fit_coefficients",
    "build_grid_weights",
    "morans_index",
    "moran_operator",
    "stpca",
    "stpca_to_cp_init",
]

logger = logging.getLogger(__name__)


@dataclass
class FourierBasis:
    """Orthonormal trigonometric design matrix on t = 0..n_points-1.

    Columns: the constant 1/sqrt(T), then sqrt(2/T)*sin(2*pi*b*t/T) and
    sqrt(2/T)*cos(2*pi*b*t/T) for b = 1..n_harmonics, with T = n_points.
    The discrete column Gram matrix is the identity (up to rounding)
    because every harmonic stays below the Nyquist frequency.
    """

    period: float
    n_points: int
    n_harmonics: int
    design: np.ndarray

    @property
    def n_columns(self) -> int:
        return 1 + 2 * self.n_harmonics


def build_fourier_basis(n_points: int, b_max: int) -> FourierBasis:
    """Design matrix with 1 + 2*b_max columns; needs n_points >= 2*b_max + 1."""
    n_points = int(n_points)
    b_max = int(b_max)
    if b_max < 0:
        raise ValueError("b_max must be >= 0")
    if n_points < 2 * b_max + 1:
        raise ValueError(
            f"n_points={n_points} too small for b_max={b_max} (need >= {2 * b_max + 1})"
        )
    period = float(n_points)
    t = np.arange(n_points, dtype=np.float64)
    design = np.empty((n_points, 1 + 2 * b_max))
    design[:, 0] = 1.0 / np.sqrt(period)
    amp = np.sqrt(2.0 / period)
    for b in range(1, b_max + 1):
        angle = 2.0 * np.pi * b * t / period
        design[:, 2 * b - 1] = amp * np.sin(angle)
        design[:, 2 * b] = amp * np.cos(angle)
    return FourierBasis(period, n_points, b_max, design)


@dataclass
class FunctionalCoefficients:
    """Per-location Fourier coefficients, variables concatenated per row.

    ``theta`` is J x (K * n_basis); row j holds, variable by variable, the
    coefficients of location j's temporally centered series. Columns are
    centered across locations when ``column_centered`` is set.
    """

    theta: np.ndarray
    n_variables: int
    n_basis: int
    column_centered: bool = True


def fit_coefficients(t: DenseTensor3, basis: FourierBasis) -> FunctionalCoefficients:
    """Least-squares Fourier coefficients of every (location, variable) series.

    Series are temporally centered before fitting and the coefficient
    columns are centered across locations afterwards. Because the design
    columns are orthonormal on the sample grid, the solve reduces to one
    projection, and temporal centering only zeroes the constant-column
    coefficient.
    """
    n_steps, n_cells, n_vars = t.dims
    if basis.n_points != n_steps:
        raise ValueError(f"basis has {basis.n_points} points but tensor has {n_steps} steps")
    series = unfold(t, 1)  # columns ordered j + J*k, zero copy
    coef = basis.design.T @ series
    coef[0, :] = 0.0  # centering a series only moves its constant coefficient
    d0 = basis.n_columns
    theta = (
        coef.reshape(d0, n_cells, n_vars, order="F")
        .transpose(1, 2, 0)
        .reshape(n_cells, n_vars * d0)
    )
    theta = theta - theta.mean(axis=0, keepdims=True)
    return FunctionalCoefficients(theta, n_vars, d0, column_centered=True)


class SpatialWeights:
    """Sparse nonnegative neighborhood weights among J locations.

    The diagonal is zero and the sparsity pattern is symmetric; when
    ``row_normalized`` every nonempty row sums to 1. ``validate=False``
    skips the invariant checks and is reserved for builders whose
    construction guarantees them.
    """

    def __init__(self, matrix, row_normalized: bool = False, validate: bool = True):
        mat = sparse.csr_matrix(matrix, dtype=np.float64)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError(f"weight matrix must be square, got {mat.shape}")
        if validate:
            if mat.nnz and mat.data.min() < 0:
                raise ValueError("weights must be nonnegative")
            if np.abs(mat.diagonal()).max(initial=0.0) > 0:
                raise ValueError("weight matrix must have a zero diagonal")
            pattern = mat.astype(bool)
            if (pattern != pattern.T).nnz != 0:
                raise ValueError("sparsity pattern must be symmetric")
            if row_normalized:
                sums = np.asarray(mat.sum(axis=1)).ravel()
                nonempty = sums > 0
                if nonempty.any() and np.abs(sums[nonempty] - 1.0).max() > 1e-12:
                    raise ValueError("row_normalized weights must have unit row sums")
        self.matrix = mat
        self.row_normalized = bool(row_normalized)

    @classmethod
    def from_matrix(cls, matrix, row_normalized: bool = False) -> "SpatialWeights":
        return cls(matrix, row_normalized)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def row_normalize(self) -> "SpatialWeights":
        """Scale every nonempty row to sum to 1."""
        sums = np.asarray(self.matrix.sum(axis=1)).ravel()
        inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
        normalized = sparse.diags(inv) @ self.matrix
        return SpatialWeights(normalized, row_normalized=True)


_QUEEN_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _parse_scheme(scheme) -> tuple[str, int]:
    if isinstance(scheme, tuple) and len(scheme) == 2 and scheme[0] == "knn":
        return "knn", int(scheme[1])
    name = str(scheme).lower()
    if name == "queen":
        return "queen", 0
    if name.startswith("knn:"):
        return "knn", int(name.split(":", 1)[1])
    raise ValueError(f"unknown weights scheme {scheme!r} (expected 'queen' or 'knn:N')")


def build_grid_weights(grid: GridSpec, scheme="queen") -> SpatialWeights:
    """Row-normalized neighborhood weights for the active cells of a grid.

    ``queen`` links each cell to its (up to 8) active grid neighbors;
    ``knn:N`` links to the N nearest active cells by grid distance (or by
    lat/lon when the grid provides them) and symmetrizes the pattern.
    An active cell with no neighbors is an error.
    """
    kind, n_neighbors = _parse_scheme(scheme)
    rows, cols = grid.active_rowcol()
    n_cells = rows.size
    if n_cells < 2:
        raise ValueError("need at least 2 active cells to build weights")

    if kind == "queen":
        index_map = np.full((grid.n_rows, grid.n_cols), -1, dtype=np.int64)
        index_map[rows, cols] = np.arange(n_cells)
        offsets = np.asarray(_QUEEN_OFFSETS)
        r2 = rows[None, :] + offsets[:, :1]
        c2 = cols[None, :] + offsets[:, 1:]
        inside = (r2 >= 0) & (r2 < grid.n_rows) & (c2 >= 0) & (c2 < grid.n_cols)
        neighbor = np.full(r2.shape, -1, dtype=np.int64)
        neighbor[inside] = index_map[r2[inside], c2[inside]]
        hit = neighbor >= 0
        src = np.broadcast_to(np.arange(n_cells), neighbor.shape)[hit]
        dst = neighbor[hit]
    else:
        if not 1 <= n_neighbors <= n_cells - 1:
            raise ValueError(f"knn neighbor count must be in [1, {n_cells - 1}]")
        if grid.lat is not None and grid.lon is not None:
            coords = np.column_stack([grid.lat, grid.lon])
        else:
            coords = np.column_stack([rows, cols]).astype(np.float64)
        d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :n_neighbors]
        src = np.repeat(np.arange(n_cells), n_neighbors)
        adjacency = sparse.csr_matrix(
            (np.ones(src.size), (src, nearest.ravel())), shape=(n_cells, n_cells)
        )
        adjacency = adjacency.maximum(adjacency.T)  # symmetrize the pattern
        coo = adjacency.tocoo()
        src, dst = coo.row, coo.col

    degree = np.bincount(src, minlength=n_cells)
    if (degree == 0).any():
        cell = int((degree == 0).argmax())
        raise ValueError(
            f"active cell {cell} at (row={rows[cell]}, col={cols[cell]}) has no neighbors"
        )
    # assemble row-normalized weights directly; the construction above
    # guarantees the SpatialWeights invariants
    normalized = sparse.csr_matrix(
        (1.0 / degree[src], (src, dst)), shape=(n_cells, n_cells)
    )
    return SpatialWeights(normalized, row_normalized=True, validate=False)


def morans_index(x, weights: SpatialWeights) -> float:
    """Global spatial autocorrelation of a cell-indexed vector.

    Classical form (J / sum of weights) * (x'Wx) / (x'x) with x centered;
    for row-normalized weights the prefactor is 1. Constant input is an
    error.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != weights.size:
        raise ValueError(f"vector length {x.size} != weights size {weights.size}")
    centered = x - x.mean()
    denom = centered @ centered
    if denom == 0.0:
        raise ValueError("constant input has undefined spatial autocorrelation")
    total = weights.matrix.sum()
    if total == 0.0:
        raise ValueError("weight matrix has no nonzero entries")
    quad = centered @ (weights.matrix @ centered)
    return float(x.size / total * quad / denom)


def moran_operator(coeffs: FunctionalCoefficients, weights: SpatialWeights) -> np.ndarray:
    """Symmetric coefficient-space operator theta' (W + W') theta / (2J)."""
    if not coeffs.column_centered:
        raise ValueError("coefficients must be column-centered")
    theta = coeffs.theta
    if theta.shape[0] != weights.size:
        raise ValueError(f"{theta.shape[0]} coefficient rows but weights for {weights.size} cells")
    # theta' W' theta is the transpose of theta' W theta, so one sparse
    # product suffices to assemble theta' (W + W') theta
    half = theta.T @ (weights.matrix @ theta)
    return (half + half.T) / (2.0 * theta.shape[0])


@dataclass
class StpcaResult:
    """Eigenpairs of the Moran operator plus per-location scores.

    ``eigenvalues`` holds the full spectrum, descending (values may be
    negative); ``eigenvectors`` the leading columns; ``spatial_scores`` is
    theta @ eigenvectors.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    spatial_scores: np.ndarray


def stpca(coeffs: FunctionalCoefficients, weights: SpatialWeights, rank: int) -> StpcaResult:
    """Top-``rank`` eigenpairs of the Moran operator, by algebraic value."""
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if rank > coeffs.theta.shape[1]:
        raise ValueError(
            f"rank {rank} exceeds the coefficient dimension {coeffs.theta.shape[1]}"
        )
    operator = moran_operator(coeffs, weights)
    values, vectors = np.linalg.eigh(operator)
    order = np.argsort(values, kind="stable")[::-1]
    values = values[order]
    vectors = vectors[:, order[:rank]]
    return StpcaResult(values, vectors, coeffs.theta @ vectors)


@dataclass
class StpcaOptions:
    """Initializer settings: harmonics, weighting scheme, fallback seed."""

    b_max: int = 5
    weights: str = "queen"
    seed: int = 0
    ridge: float = 1e-12

    def __post_init__(self):
        if self.b_max < 0:
            raise ValueError("b_max must be >= 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        _parse_scheme(self.weights)


def stpca_to_cp_init(
    t: DenseTensor3,
    grid: GridSpec,
    rank: int,
    opts: StpcaOptions | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CP starting factors from the spatial principal components.

    The spatial factor takes the unit-normalized score columns (zero-norm
    columns are replaced by seeded random unit vectors), the variable
    factor starts at all-ones, and the temporal factor is the ridge
    least-squares completion given the other two.
    """
    opts = opts or StpcaOptions()
    n_steps, n_cells, n_vars = t.dims
    if grid.n_active != n_cells:
        raise ValueError(f"grid has {grid.n_active} active cells but tensor has {n_cells}")
    # short series cannot support the requested harmonics; clamp instead of failing
    b_max = min(opts.b_max, (n_steps - 1) // 2)
    if b_max < opts.b_max:
        logger.warning(
            "stpca init: b_max clamped from %d to %d for a %d-step series",
            opts.b_max, b_max, n_steps,
        )
    max_rank = n_vars * (1 + 2 * b_max)
    if rank > max_rank:
        raise ValueError(f"rank {rank} exceeds K*(1+2*b_max) = {max_rank}")

    basis = build_fourier_basis(n_steps, b_max)
    coeffs = fit_coefficients(t, basis)
    weights = build_grid_weights(grid, opts.weights)
    components = stpca(coeffs, weights, rank)

    spatial = components.spatial_scores.copy()
    norms = np.linalg.norm(spatial, axis=0)
    zero = norms == 0.0
    spatial /= np.where(zero, 1.0, norms)[None, :]
    if zero.any():
        rng = np.random.default_rng(opts.seed)
        for r in np.flatnonzero(zero):
            v = rng.standard_normal(n_cells)
            spatial[:, r] = v / np.linalg.norm(v)
        logger.warning(
            "stpca init: %d zero-norm score column(s) replaced by random unit vectors",
            int(zero.sum()),
        )

    variable = np.ones((n_vars, rank))
    gram = (variable.T @ variable) * (spatial.T @ spatial)
    gram += opts.ridge * np.eye(rank)
    mttkrp = unfold(t, 1) @ khatri_rao(variable, spatial)
    temporal = np.linalg.solve(gram, mttkrp.T).T
    return temporal, spatial, variable
