"""Dense order-3 tensor algebra: matricization, Khatri-Rao products, rank-R
factor models, and reconstruction error metrics.

Conventions
-----------
Tensors are (time, space, variable) arrays of shape (I, J, K) held in
Fortran order, so entry (i, j, k) sits at linear offset i + I*j + I*J*k.
The mode-n unfolding puts mode n on the rows; the remaining axes index the
columns in increasing mode order, lower mode varying fastest:

    mode 1: I x (J*K), column j + J*k
    mode 2: J x (I*K), column i + I*k
    mode 3: K x (I*J), column i + I*j

This matches the Khatri-Rao ordering used by the alternating least squares
updates, e.g. ``unfold(t, 1) @ khatri_rao(C, B)`` contracts correctly.
Mode-1 unfolding of a stored tensor is a zero-copy reshape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DenseTensor3",
    "CpModel",
    "unfold",
    "fold",
    "khatri_rao",
    "cp_reconstruct",
    "relative_error",
    "normalize_model",
]


class DenseTensor3:
    """Immutable dense order-3 tensor with finite float64 entries.

    ``labels`` is an optional free-form mapping for axis metadata (dates,
    cell ids, variable names); it is carried along but never interpreted.
    """

    def __init__(self, data, labels=None):
        arr = np.array(data, dtype=np.float64, order="F", copy=True)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-way array, got {arr.ndim} dimensions")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("tensor entries must be finite")
        arr.setflags(write=False)
        self._data = arr
        self.labels = dict(labels) if labels else {}

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dims(self) -> tuple[int, int, int]:
        return self._data.shape

    def norm(self) -> float:
        """Frobenius norm over all entries."""
        return float(np.linalg.norm(self._data.ravel(order="K")))

    def __repr__(self):
        i, j, k = self.dims
        return f"DenseTensor3(dims=({i}, {j}, {k}))"


def _as_array(t) -> np.ndarray:
    if isinstance(t, DenseTensor3):
        return t.data
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError("expected an order-3 tensor")
    return arr


def unfold(t, mode: int) -> np.ndarray:
    """Mode-n matricization; see the module docstring for the column order."""
    data = _as_array(t)
    i, j, k = data.shape
    if mode == 1:
        return data.reshape(i, j * k, order="F")
    if mode == 2:
        return data.transpose(1, 0, 2).reshape(j, i * k, order="F")
    if mode == 3:
        return data.transpose(2, 0, 1).reshape(k, i * j, order="F")
    raise ValueError("mode must be 1, 2, or 3")


def fold(mat, mode: int, dims) -> DenseTensor3:
    """Inverse of :func:`unfold` for the given target dims."""
    mat = np.asarray(mat, dtype=np.float64)
    i, j, k = (int(d) for d in dims)
    if mode == 1:
        data = mat.reshape(i, j, k, order="F")
    elif mode == 2:
        data = mat.reshape(j, i, k, order="F").transpose(1, 0, 2)
    elif mode == 3:
        data = mat.reshape(k, i, j, order="F").transpose(1, 2, 0)
    else:
        raise ValueError("mode must be 1, 2, or 3")
    return DenseTensor3(data)


def khatri_rao(m1, m2) -> np.ndarray:
    """Column-wise Kronecker product of two matrices.

    For inputs (p, R) and (q, R) the result is (p*q, R); column r is
    ``np.kron(m1[:, r], m2[:, r])``, i.e. the second matrix's row index
    varies fastest.
    """
    m1 = np.asarray(m1, dtype=np.float64)
    m2 = np.asarray(m2, dtype=np.float64)
    if m1.ndim != 2 or m2.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if m1.shape[1] != m2.shape[1]:
        raise ValueError(f"column counts differ: {m1.shape[1]} vs {m2.shape[1]}")
    p, r = m1.shape
    q = m2.shape[0]
    return (m1[:, None, :] * m2[None, :, :]).reshape(p * q, r)


@dataclass
class CpModel:
    """Rank-R factor model: ``weights`` (R,) plus per-mode factor matrices.

    ``factors`` holds the time (I, R), space (J, R) and variable (K, R)
    matrices in mode order. After :func:`normalize_model` every factor
    column has unit norm and the weights are nonnegative and descending.
    """

    weights: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        facs = tuple(np.asarray(f, dtype=np.float64) for f in self.factors)
        if len(facs) != 3:
            raise ValueError("expected exactly three factor matrices")
        r = self.weights.size
        if r < 1:
            raise ValueError("rank must be >= 1")
        for n, f in enumerate(facs):
            if f.ndim != 2 or f.shape[1] != r:
                raise ValueError(f"factor {n} must be 2-d with {r} columns, got shape {f.shape}")
            if f.shape[0] < 1:
                raise ValueError(f"factor {n} has no rows")
            if not np.isfinite(f).all():
                raise ValueError(f"factor {n} has non-finite entries")
        if not np.isfinite(self.weights).all():
            raise ValueError("weights must be finite")
        self.factors = facs

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(f.shape[0] for f in self.factors)


def cp_reconstruct(model: CpModel) -> DenseTensor3:
    """Evaluate the weighted sum of rank-one outer products."""
    a, b, c = model.factors
    data = np.einsum("r,ir,jr,kr->ijk", model.weights, a, b, c, optimize=True)
    return DenseTensor3(data)


def relative_error(estimate, reference) -> float:
    """``||estimate - reference|| / ||reference||`` over all entries."""
    est = _as_array(estimate)
    ref = _as_array(reference)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    nref = np.linalg.norm(ref.ravel(order="K"))
    if nref == 0.0:
        raise ValueError("reference tensor has zero norm")
    return float(np.linalg.norm((est - ref).ravel(order="K")) / nref)


def normalize_model(model: CpModel) -> CpModel:
    """Scale factor columns to unit norm, absorbing scales into the weights,
    then sort components by descending weight (stable).

    Zero-norm columns get weight 0 and are replaced by the first standard
    basis vector; negative net scales are flipped into the first factor.
    Reconstruction is unchanged up to rounding.
    """
    facs = [f.copy() for f in model.factors]
    scale = model.weights.copy()
    for f in facs:
        norms = np.linalg.norm(f, axis=0)
        zero = norms == 0.0
        f /= np.where(zero, 1.0, norms)[None, :]
        if zero.any():
            f[0, zero] = 1.0
        scale *= norms
    negative = scale < 0.0
    if negative.any():
        facs[0][:, negative] *= -1.0
        scale = np.abs(scale)
    order = np.argsort(-scale, kind="stable")
    return CpModel(scale[order], tuple(f[:, order] for f in facs))
