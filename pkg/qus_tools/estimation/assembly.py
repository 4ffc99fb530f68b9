#!/usr/bin/env python
"""Provide the quadratic data system (H, t) and the depth-difference penalty operators.

The unknowns are stacked as x = [a_1..a_N, b_1..b_N, n_1..n_N]. Every block of H is
diagonal, so H is kept as six diagonal vectors; reordering x depth by depth
(a_i, b_i, n_i, a_i+1, ...) makes H and every H + c K^T K banded.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse

from qus_tools import errors as e

PARAMETERS = ("a", "b", "n")

# (row block, column block) of H for each stored diagonal H1..H6
BLOCK_POSITIONS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


@dataclass(frozen=True)
class DifferenceOperator(object):
    """The (n-1) x n first-difference operator with rows (.., 1, -1, ..)."""

    n: int

    def __post_init__(self):
        """Validate the size."""
        if self.n < 2:
            raise e.DataError(f"Difference operator needs n >= 2, got {self.n}.")

    @property
    def shape(self):
        return (self.n - 1, self.n)

    @property
    def matrix(self):
        """Return the operator as a sparse CSR matrix."""
        return sparse.diags([1.0, -1.0], [0, 1], shape=self.shape, format="csr")

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        return v[:-1] - v[1:]

    def toarray(self):
        return self.matrix.toarray()


def build_difference(n):
    """Return the first-difference operator for ``n`` depths."""
    return DifferenceOperator(n=int(n))


@dataclass(frozen=True)
class NormalSystem(object):
    """H stored as its six distinct diagonals and t as three stacked vectors.

    Attributes:
        h (np.ndarray): Shape (6, N_R): diagonals of H1..H6.
        t (np.ndarray): Shape (3, N_R): t1, t2, t3.
    """

    h: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        """Validate and freeze the storage."""
        h = np.array(self.h, dtype=float)
        t = np.array(self.t, dtype=float)
        if h.ndim != 2 or h.shape[0] != 6 or t.shape != (3, h.shape[1]):
            raise e.DimensionMismatchError(f"NormalSystem expects h (6, N) and t (3, N), got {h.shape}, {t.shape}.")
        h.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "t", t)

    @property
    def n_depths(self):
        return self.h.shape[1]

    @property
    def size(self):
        return 3 * self.n_depths

    @property
    def vector(self):
        """Return t stacked as [t1, t2, t3]."""
        return self.t.ravel()

    def blocks(self):
        """Return the per-depth 3 x 3 blocks of H, shape (N_R, 3, 3)."""
        blocks = np.empty((self.n_depths, 3, 3))
        for diagonal, (r, c) in zip(self.h, BLOCK_POSITIONS):
            blocks[:, r, c] = diagonal
            blocks[:, c, r] = diagonal
        return blocks

    @classmethod
    def from_blocks(cls, blocks, t):
        """Return a NormalSystem from per-depth symmetric blocks and a (3, N_R) right-hand side."""
        h = np.stack([blocks[:, r, c] for r, c in BLOCK_POSITIONS])
        return cls(h=h, t=t)

    def matrix(self):
        """Return H as a sparse (3 N_R) x (3 N_R) matrix."""
        grid = [[None] * 3 for _ in range(3)]
        for diagonal, (r, c) in zip(self.h, BLOCK_POSITIONS):
            grid[r][c] = sparse.diags(diagonal)
            grid[c][r] = sparse.diags(diagonal)
        return sparse.bmat(grid, format="csr")

    def dense(self):
        return self.matrix().toarray()

    def matvec(self, x):
        """Return H x using the block structure."""
        x = np.asarray(x, dtype=float).reshape(3, self.n_depths)
        return np.einsum("ijk,ki->ji", self.blocks(), x).ravel()

    def squared(self):
        """Return the system (H^T H, H^T t) of the residual form 0.5 ||H x - t||^2."""
        blocks = self.blocks()
        squared = np.einsum("nij,njk->nik", blocks, blocks)
        rhs = np.einsum("nij,jn->in", blocks, self.t)
        return NormalSystem.from_blocks(squared, rhs)

    def condition(self):
        """Return the largest per-depth condition number of H (inf when a block is singular)."""
        with np.errstate(all="ignore"):
            conds = np.linalg.cond(self.blocks())
        conds = np.where(np.isfinite(conds), conds, np.inf)
        return float(conds.max())


def _weight_values(weights, shape, allow_zero):
    if weights is None:
        return np.ones(shape)

    values = np.asarray(getattr(weights, "values", weights), dtype=float)
    if values.shape != shape:
        raise e.DimensionMismatchError(f"Weights have shape {values.shape}, expected {shape}.")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise e.NonPositiveValueError("Data weights must be finite and >= 0.")
    if not allow_zero and np.any(values == 0):
        cell = tuple(int(v) for v in np.argwhere(values == 0)[0])
        raise e.NonPositiveValueError(f"Data weight is zero at cell {cell}; floor the weights first.", cell=cell)
    return values


def build_normal_system(x_map, grid, weights=None, allow_zero_weights=False):
    """Return the weighted NormalSystem of one log-ratio map from closed-form sums.

    Args:
        x_map (np.ndarray): (N_F, N_R) log-ratio map X.
        grid (SpectralGrid): Axes of ``x_map``.
        weights (WeightMap or np.ndarray): Data weights; uniform when None.
        allow_zero_weights (bool): Accept exact zeros, which drop those cells from the data term.
    """
    x_map = np.asarray(x_map, dtype=float)
    grid.check_map(x_map, "log-ratio map")
    if not np.all(np.isfinite(x_map)):
        raise e.DataError("Log-ratio map contains non-finite values.")
    w = _weight_values(weights, grid.shape, allow_zero_weights)

    f = grid.freqs[:, None]
    lf = np.log(f)
    z = grid.depths

    h = np.stack([
        16.0 * z**2 * (w * f**2).sum(axis=0),
        -4.0 * z * (w * f).sum(axis=0),
        -4.0 * z * (w * f * lf).sum(axis=0),
        w.sum(axis=0),
        (w * lf).sum(axis=0),
        (w * lf**2).sum(axis=0),
    ])
    wx = w * x_map
    t = np.stack([
        -4.0 * z * (wx * f).sum(axis=0),
        wx.sum(axis=0),
        (wx * lf).sum(axis=0),
    ])
    return NormalSystem(h=h, t=t)


@dataclass(frozen=True)
class PenaltyOperator(object):
    """Per-parameter difference blocks K_j = w_j B acting on the stacked unknowns."""

    w_a: float
    w_b: float
    w_n: float
    n_depths: int
    split: bool = False

    def __post_init__(self):
        """Validate the weights."""
        if self.n_depths < 2:
            raise e.DataError(f"Penalty needs n >= 2 depths, got {self.n_depths}.")
        if min(self.w_a, self.w_b, self.w_n) < 0:
            raise e.ConfigError("Regularization weights must be >= 0.")

    @property
    def weights(self):
        return dict(zip(PARAMETERS, (self.w_a, self.w_b, self.w_n)))

    @property
    def difference(self):
        return build_difference(self.n_depths)

    def block(self, name):
        """Return w_j B for one parameter, shape (N_R - 1) x N_R."""
        return self.weights[name] * self.difference.matrix

    def rows(self, names):
        """Return the penalty rows of ``names`` embedded against the full stacked x."""
        n = self.n_depths
        if not names:
            return sparse.csr_matrix((0, 3 * n))

        parts = []
        for name in names:
            embedded = [sparse.csr_matrix((n - 1, n))] * 3
            embedded[PARAMETERS.index(name)] = self.block(name)
            parts.append(sparse.hstack(embedded))
        return sparse.vstack(parts, format="csr")

    @property
    def joint(self):
        """Return K = blockdiag(w_a B, w_b B, w_n B)."""
        return sparse.block_diag([self.block(name) for name in PARAMETERS], format="csr")

    @property
    def k1(self):
        """Return K1 = w_a B, acting on a alone."""
        return sparse.csr_matrix(self.block("a"))

    @property
    def k2(self):
        """Return K2 = blockdiag(w_b B, w_n B), acting on [b; n]."""
        return sparse.block_diag([self.block("b"), self.block("n")], format="csr")


def build_penalty(w_a, w_b, w_n, n, split=False):
    """Return the PenaltyOperator for the given regularization weights and depth count."""
    return PenaltyOperator(w_a=float(w_a), w_b=float(w_b), w_n=float(w_n), n_depths=int(n), split=bool(split))


def interleave_order(n_depths):
    """Return the permutation taking stacked x to depth-major (a_i, b_i, n_i) order."""
    return (np.arange(3)[None, :] * n_depths + np.arange(n_depths)[:, None]).ravel()


class SystemFactor(object):
    """Cholesky factorization of a symmetric positive definite system, reused across solves.

    Banded storage is used after the depth-major reordering; ``dense=True`` keeps a
    dense factor instead, for testing.
    """

    def __init__(self, matrix, dense=False):
        """Factorize ``matrix`` (sparse or dense, square, SPD)."""
        matrix = sparse.csr_matrix(matrix)
        size = matrix.shape[0]
        if matrix.shape != (size, size) or size % 3:
            raise e.DimensionMismatchError(
                f"System matrix must be square with a multiple of 3 rows, got {matrix.shape}."
            )

        self.dense = dense
        self.order = interleave_order(size // 3)
        self.inverse_order = np.argsort(self.order)

        try:
            if dense:
                self._factor = linalg.cho_factor(matrix.toarray())
            else:
                permuted = matrix[self.order][:, self.order].tocoo()
                upper = permuted.col >= permuted.row
                rows, cols, vals = permuted.row[upper], permuted.col[upper], permuted.data[upper]
                self.bandwidth = int((cols - rows).max()) if vals.size else 0
                banded = np.zeros((self.bandwidth + 1, size))
                np.add.at(banded, (self.bandwidth + rows - cols, cols), vals)
                self._factor = linalg.cholesky_banded(banded, lower=False)
        except linalg.LinAlgError as err:
            raise e.SingularSystemError("System matrix is not positive definite") from err

    def solve(self, rhs):
        """Return the solution of the factorized system for ``rhs`` in stacked order."""
        rhs = np.asarray(rhs, dtype=float)
        if self.dense:
            return linalg.cho_solve(self._factor, rhs)
        solution = linalg.cho_solve_banded((self._factor, False), rhs[self.order])
        return solution[self.inverse_order]
