"""Semi-discrete optimal transport between uniform empirical patch measures.

Cost convention: ``c(u, v) = 0.5 * ||u - v||**2``, so every OT value in this
module equals half the squared Wasserstein-2 distance.  Multiply by two to
report ``W2**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .errors import CapacityExceededError, DivergenceError, InvalidArgumentError, ShapeMismatchError
from .imaging import PatchMatrix, extract_patches, scatter_patches

__all__ = [
    "DualPotential",
    "c_transform",
    "c_transform_rows",
    "semidual_value",
    "solve_dual_asgd",
    "default_step_scale",
    "assignment",
    "ot_gradient_image",
    "exact_ot",
]

EXACT_OT_LIMIT = 64
# Cost-matrix entries evaluated per block; 2 MB blocks stay cache resident.
_CHUNK_ENTRIES = 1 << 18


@dataclass
class DualPotential:
    """Dual vector on the reference patches.

    ``values`` is the raw ascent iterate and ``avg`` its running average.
    The average is the estimate of the optimal potential once any step has
    been taken; see :attr:`vector`.
    """

    values: np.ndarray
    avg: np.ndarray = None
    step_count: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.avg = self.values.copy() if self.avg is None else np.asarray(self.avg, dtype=np.float64)
        if self.values.shape != self.avg.shape or self.values.ndim != 1:
            raise ShapeMismatchError("values and avg must be 1D vectors of equal length")

    @classmethod
    def zeros(cls, m):
        return cls(np.zeros(m))

    @property
    def vector(self):
        return self.avg if self.step_count > 0 else self.values

    def __len__(self):
        return self.values.shape[0]


def _psi_vector(psi):
    if isinstance(psi, DualPotential):
        return psi.vector
    return np.asarray(psi, dtype=np.float64)


def _rows(q):
    data = q.data if isinstance(q, PatchMatrix) else np.asarray(q, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    return data


def _check(psi, src, refs):
    if src.shape[1] != refs.shape[1]:
        raise ShapeMismatchError(
            f"patch length {src.shape[1]} differs from reference length {refs.shape[1]}"
        )
    if psi.shape != (refs.shape[0],):
        raise ShapeMismatchError(
            f"potential has length {psi.shape[0]}, expected {refs.shape[0]}"
        )


def c_transform_rows(psi, src, refs):
    """Vectorised c-transform of every row of ``src``.

    Returns ``(values, argmin)`` where ``values[i] = min_j c(src_i, ref_j) - psi_j``
    and ``argmin`` is the lowest minimising index.
    """
    psi = _psi_vector(psi)
    src = _rows(src)
    refs = _rows(refs)
    _check(psi, src, refs)
    m = refs.shape[0]
    # Shifted score 0.5*|r|^2 - <q, r> - psi; the 0.5*|q|^2 term does not move the argmin.
    ref_term = 0.5 * np.einsum("ij,ij->i", refs, refs) - psi
    neg_refs_t = -refs.T
    chunk = max(1, _CHUNK_ENTRIES // max(m, 1))
    idx = np.empty(src.shape[0], dtype=np.intp)
    for start in range(0, src.shape[0], chunk):
        scores = src[start : start + chunk] @ neg_refs_t
        scores += ref_term
        idx[start : start + chunk] = np.argmin(scores, axis=1)
    diff = src - refs[idx]
    values = 0.5 * np.einsum("ij,ij->i", diff, diff) - psi[idx]
    return values, idx


def c_transform(psi, q, refs):
    """c-transform of a single patch vector ``q``: ``(value, argmin)``."""
    q = np.asarray(q, dtype=np.float64).ravel()
    values, idx = c_transform_rows(psi, q[None, :], refs)
    return float(values[0]), int(idx[0])


def semidual_value(psi, P, refs):
    """Semi-dual objective ``mean_i psi^c(P_i) + mean_j psi_j``.

    By weak duality this never exceeds the exact OT value.
    """
    values, _ = c_transform_rows(psi, P, refs)
    return float(values.mean() + _psi_vector(psi).mean())


def default_step_scale(P, refs, rng, pairs=100):
    """Mean cost over ``pairs`` random (source, reference) pairs."""
    src = _rows(P)
    ref = _rows(refs)
    i = rng.integers(0, src.shape[0], size=pairs)
    j = rng.integers(0, ref.shape[0], size=pairs)
    diff = src[i] - ref[j]
    scale = 0.5 * float(np.mean(np.einsum("ij,ij->i", diff, diff)))
    return scale if scale > 0 else 1.0


def solve_dual_asgd(P, refs, iters=None, step_scale=None, batch=32, seed=0, init=None):
    """Averaged stochastic gradient ascent on the semi-dual in ``psi``.

    At step ``t`` a batch of source rows is drawn uniformly with replacement
    and the potential moves by ``step_scale / sqrt(t)`` along the unbiased
    stochastic gradient ``1/M - counts/batch``.  The returned potential
    carries the running average of the iterates.

    Parameters
    ----------
    P, refs : PatchMatrix or ndarray
        Source and reference supports (rows are points).
    iters : int, optional
        Number of ascent steps; defaults to ``20 * max(N, M)``.
    step_scale : float, optional
        Base step length; defaults to a sampled mean pairwise cost.
    batch : int
        Source rows sampled per step.
    seed : int
        Seed of the sampling generator; equal seeds give equal potentials.
    init : DualPotential, optional
        Warm start; ascent restarts from ``init.vector`` with a fresh average.
    """
    src = _rows(P)
    ref = _rows(refs)
    n, m = src.shape[0], ref.shape[0]
    if n == 0 or m == 0:
        raise InvalidArgumentError("both measures must have at least one support point")
    if batch < 1:
        raise InvalidArgumentError(f"batch must be >= 1, got {batch}")
    rng = np.random.default_rng(seed)
    if iters is None:
        iters = 20 * max(n, m)
    if iters < 1:
        raise InvalidArgumentError(f"iters must be >= 1, got {iters}")
    if step_scale is None:
        step_scale = default_step_scale(src, ref, rng)
    if not step_scale > 0:
        raise InvalidArgumentError(f"step_scale must be > 0, got {step_scale}")

    psi = np.zeros(m) if init is None else _psi_vector(init).copy()
    if psi.shape != (m,):
        raise ShapeMismatchError(f"warm start has length {psi.shape[0]}, expected {m}")
    _check(psi, src, ref)
    avg = psi.copy()
    half_sq = 0.5 * np.einsum("ij,ij->i", ref, ref)
    neg_ref_t = -ref.T
    uniform = 1.0 / m
    for t in range(1, iters + 1):
        scores = src[rng.integers(0, n, size=batch)] @ neg_ref_t
        scores += half_sq - psi
        counts = np.bincount(np.argmin(scores, axis=1), minlength=m)
        psi += (step_scale / np.sqrt(t)) * (uniform - counts / batch)
        avg += (psi - avg) / t
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(avg))):
        raise DivergenceError("dual ascent produced non-finite potentials")
    return DualPotential(psi, avg, iters)


def assignment(psi, P, refs):
    """Index of the c-transform minimiser for every source row."""
    _, idx = c_transform_rows(psi, P, refs)
    return idx


def ot_gradient_image(x, refs, psi, p):
    """Image-space gradient of the OT term at frozen ``psi``.

    ``(1/N) * sum_i P_i^T (P_i x - ref_{sigma(i)})``; with an optimal
    ``psi`` this is the gradient of ``0.5 * W2**2`` between the patch
    measure of ``x`` and the reference patches.
    """
    P = extract_patches(x, p)
    ref = _rows(refs)
    if ref.shape[1] != P.dim:
        raise ShapeMismatchError(
            f"reference patch length {ref.shape[1]} differs from {P.dim}"
        )
    idx = assignment(psi, P, ref)
    return scatter_patches((P.data - ref[idx]) / P.rows, P.source_shape, P.patch_shape)


@dataclass
class ExactOT:
    value: float
    coupling: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.value, self.coupling))


def _cost_matrix(src, ref):
    diff = src[:, None, :] - ref[None, :, :]
    return 0.5 * np.einsum("ijk,ijk->ij", diff, diff)


def exact_ot(P, refs):
    """Exact discrete OT between two uniform measures (test oracle).

    Equal sizes are solved as an assignment problem; unequal sizes through
    the transport linear program.  Both sides are capped at 64 points.
    """
    src = _rows(P)
    ref = _rows(refs)
    n, m = src.shape[0], ref.shape[0]
    if src.shape[1] != ref.shape[1]:
        raise ShapeMismatchError("point dimensions differ")
    if n == 0 or m == 0:
        raise InvalidArgumentError("empty measure")
    if n > EXACT_OT_LIMIT or m > EXACT_OT_LIMIT:
        raise CapacityExceededError(
            f"exact OT limited to {EXACT_OT_LIMIT} points per side, got {n} x {m}"
        )
    cost = _cost_matrix(src, ref)
    if n == m:
        rows, cols = linear_sum_assignment(cost)
        coupling = np.zeros((n, m))
        coupling[rows, cols] = 1.0 / n
        return ExactOT(float(cost[rows, cols].sum() / n), coupling)
    # Row sums 1/N, column sums 1/M over the flattened (i, j) grid.
    a_eq = np.vstack([np.kron(np.eye(n), np.ones((1, m))), np.kron(np.ones((1, n)), np.eye(m))])
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    coupling = np.clip(res.x.reshape(n, m), 0.0, None)
    return ExactOT(float(np.sum(cost * coupling)), coupling)
