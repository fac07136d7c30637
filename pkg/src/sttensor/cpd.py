"""CP decomposition by alternating least squares with pluggable
initialization (random, HOSVD, or spatial-component seeding).

Each sweep solves the regularized normal equations for one factor at a
time, e.g. for the temporal factor

    A <- X_(1) (C ⊙ B) (C'C * B'B + ridge I)^(-1)

and cyclically for the other two modes (⊙ is the column-wise Kronecker
product, * the elementwise product). Updated factors are rescaled to unit
columns between updates, which leaves the iterates' reconstructions
unchanged while keeping the gram solves well conditioned. The fit is the
exact relative residual norm, recomputed densely every sweep, so the
traced error sequence is reliable down to rounding level.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .io import GridSpec
from .stpca import StpcaOptions, stpca_to_cp_init
from .tensor import CpModel, DenseTensor3, khatri_rao, normalize_model, unfold

__all__ = [
    "AlsOptions",
    "AlsTrace",
    "init_random",
    "init_hosvd",
    "cp_als",
    "normalize_model",
]

INITIALIZERS = ("random", "hosvd", "stpca")


@dataclass
class AlsOptions:
    rank: int
    max_iters: int = 500
    fit_tolerance: float = 1e-8
    ridge: float = 1e-12
    seed: int = 0
    initializer: str = "random"
    stpca: StpcaOptions | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.fit_tolerance > 0:
            raise ValueError("fit_tolerance must be > 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.initializer not in INITIALIZERS:
            raise ValueError(f"initializer must be one of {INITIALIZERS}")


@dataclass
class AlsTrace:
    """Per-sweep relative errors plus phase timings and stop diagnostics."""

    rel_errors: np.ndarray
    iterations: int
    stop_reason: str  # "converged" or "max_iters"
    init_seconds: float
    als_seconds: float
    notes: list[str] = field(default_factory=list)


def init_random(dims, rank: int, seed: int = 0):
    """Factors with i.i.d. uniform [0, 1) entries; deterministic per seed."""
    if rank < 1:
        raise ValueError("rank must be >= 1")
    rng = np.random.default_rng(seed)
    return tuple(rng.random((int(d), rank)) for d in dims)


def _pad_unit_columns(base, n_extra, rng):
    """Extend an orthonormal block with seeded random unit columns.

    New columns are orthogonalized against the existing ones (and against
    each other while the ambient dimension allows); once the orthogonal
    complement is exhausted they fall back to unit vectors orthogonal to
    the original block only, or plain unit vectors as a last resort.
    """
    n = base.shape[0]
    block = base
    cols = []
    for _ in range(n_extra):
        v = rng.standard_normal(n)
        vn = np.linalg.norm(v)
        w = v - block @ (block.T @ v)
        nw = np.linalg.norm(w)
        if nw > 1e-8 * vn:
            w = w / nw
            block = np.column_stack([block, w])
        else:
            w = v - base @ (base.T @ v) if base.shape[1] else v
            nw = np.linalg.norm(w)
            w = w / nw if nw > 1e-8 * vn else v / vn
        cols.append(w)
    return np.column_stack([base] + cols)


def init_hosvd(t: DenseTensor3, rank: int, seed: int = 0):
    """Leading left singular vectors of each unfolding.

    When a mode cannot supply ``rank`` directions (small dimension or
    rank-deficient unfolding), the remaining columns are padded with seeded
    random unit vectors via :func:`_pad_unit_columns`.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    rng = np.random.default_rng(seed)
    factors = []
    for mode in (1, 2, 3):
        m = unfold(t, mode)
        try:
            u, s, _ = np.linalg.svd(m, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"SVD of the mode-{mode} unfolding failed: {exc}") from exc
        lead = s[0] if s.size else 0.0
        tol = max(m.shape) * np.finfo(np.float64).eps * lead
        available = int((s > tol).sum())
        keep = min(rank, m.shape[0], available)
        base = u[:, :keep]
        if keep < rank:
            base = _pad_unit_columns(base, rank - keep, rng)
        factors.append(base)
    return tuple(factors)


def _initial_factors(t, opts: AlsOptions, grid):
    if opts.initializer == "random":
        return init_random(t.dims, opts.rank, opts.seed)
    if opts.initializer == "hosvd":
        return init_hosvd(t, opts.rank, opts.seed)
    if grid is None:
        raise ValueError("the stpca initializer requires a grid")
    stpca_opts = opts.stpca if opts.stpca is not None else StpcaOptions(seed=opts.seed)
    return stpca_to_cp_init(t, grid, opts.rank, stpca_opts)


def _ls_update(unfolding, f1, f2, ridge):
    # factor <- X_(n) (f1 ⊙ f2) (f1'f1 * f2'f2 + ridge I)^(-1)
    gram = (f1.T @ f1) * (f2.T @ f2)
    if ridge:
        gram = gram + ridge * np.eye(gram.shape[0])
    mttkrp = unfolding @ khatri_rao(f1, f2)
    return np.linalg.solve(gram, mttkrp.T).T


def _rescale(factor):
    norms = np.linalg.norm(factor, axis=0)
    safe = np.where(norms == 0.0, 1.0, norms)
    return factor / safe[None, :], norms


def cp_als(t: DenseTensor3, opts: AlsOptions, grid: GridSpec | None = None):
    """Alternating least squares CP decomposition.

    Returns a normalized :class:`CpModel` and an :class:`AlsTrace`. The
    sweep order is temporal, spatial, variable; convergence is declared
    when the change in relative error over one full sweep drops below
    ``opts.fit_tolerance``.
    """
    if not isinstance(t, DenseTensor3):
        t = DenseTensor3(t)
    norm_x = t.norm()
    if norm_x == 0.0:
        raise ValueError("cannot decompose a tensor with zero norm")

    tic = time.perf_counter()
    a, b, c = _initial_factors(t, opts, grid)
    init_seconds = time.perf_counter() - tic

    u1 = unfold(t, 1)  # zero-copy view; the other two are cached copies
    u2 = unfold(t, 2)
    u3 = unfold(t, 3)

    rels: list[float] = []
    weights = np.ones(opts.rank)
    stop_reason = "max_iters"
    tic = time.perf_counter()
    for sweep in range(1, opts.max_iters + 1):
        try:
            a, _ = _rescale(_ls_update(u1, c, b, opts.ridge))
            b, _ = _rescale(_ls_update(u2, c, a, opts.ridge))
            c, weights = _rescale(_ls_update(u3, b, a, opts.ridge))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"gram solve failed during sweep {sweep}: {exc}", iteration=sweep) from exc
        estimate = np.einsum("r,ir,jr,kr->ijk", weights, a, b, c, optimize=True)
        rel = float(np.linalg.norm((t.data - estimate).ravel(order="K")) / norm_x)
        if not np.isfinite(rel):
            raise NumericError(f"non-finite values during sweep {sweep}", iteration=sweep)
        rels.append(rel)
        if sweep > 1 and abs(rels[-2] - rel) < opts.fit_tolerance:
            stop_reason = "converged"
            break
    als_seconds = time.perf_counter() - tic

    model = normalize_model(CpModel(weights, (a, b, c)))
    notes = [
        f"component {r} collapsed to a zero column during ALS"
        for r in range(model.rank)
        if model.weights[r] == 0.0
    ]
    trace = AlsTrace(
        rel_errors=np.asarray(rels),
        iterations=len(rels),
        stop_reason=stop_reason,
        init_seconds=init_seconds,
        als_seconds=als_seconds,
        notes=notes,
    )
    return model, trace
