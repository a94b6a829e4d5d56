"""Real linear operators with explicit adjoints.

Everything a first-order primal-dual solver needs from its operators lives
here: matrix-vector products, adjoints, operator-norm estimation by power
iteration, and construction of diagonal step-size metrics from absolute
row/column sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite


class Shape(NamedTuple):
    rows: int
    cols: int


@dataclass(frozen=True)
class DiagonalMetric:
    """Diagonal positive-definite metric, stored as its diagonal entries."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 1:
            raise ValueError(f"metric entries must be a vector, got shape {entries.shape}")
        if entries.size and not np.all(entries > 0):
            raise ValueError("metric entries must be strictly positive")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return self.entries.size


def _as_vector(v, length: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (length,):
        raise ValueError(f"{what}: expected a vector of length {length}, got shape {v.shape}")
    return v


def _abs_pow(values: np.ndarray, p: float) -> np.ndarray:
    # convention 0^0 = 0, so p = 0 counts nonzero entries
    if p == 0.0:
        return (values != 0).astype(np.float64)
    return np.abs(values) ** p


def _safe_inverse(denominator: np.ndarray) -> np.ndarray:
    # zero denominators mark coordinates the operator never touches;
    # step 1.0 there keeps the metric positive definite
    out = np.ones_like(denominator)
    nonzero = denominator != 0
    out[nonzero] = 1.0 / denominator[nonzero]
    return out


def _check_power(p: float):
    if not 0.0 <= p <= 2.0:
        raise ValueError(f"exponent must lie in [0, 2], got {p}")


class LinearOperator:
    """Base class: a real linear map with a matching adjoint.

    Subclasses implement ``apply`` and ``apply_adjoint``; those that give
    entrywise access (or have a closed form for it) also implement the
    absolute-power row/column sums used to build diagonal preconditioners.
    All operators are immutable after construction.
    """

    def __init__(self, rows: int, cols: int):
        rows, cols = int(rows), int(cols)
        if rows < 0 or cols < 0:
            raise ValueError(f"operator dimensions must be nonnegative, got ({rows}, {cols})")
        self.shape = Shape(rows, cols)

    @property
    def rows(self) -> int:
        return self.shape.rows

    @property
    def cols(self) -> int:
        return self.shape.cols

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def apply_adjoint(self, y) -> np.ndarray:
        raise NotImplementedError

    def abs_pow_row_sums(self, p: float) -> np.ndarray:
        """Vector of sum_j |K(i,j)|^p over each row i."""
        raise TypeError(f"{type(self).__name__} does not expose entrywise access")

    def abs_pow_col_sums(self, p: float) -> np.ndarray:
        """Vector of sum_i |K(i,j)|^p over each column j."""
        raise TypeError(f"{type(self).__name__} does not expose entrywise access")

    def _check_input(self, x) -> np.ndarray:
        return _as_vector(x, self.cols, f"apply to {self.rows}x{self.cols} operator")

    def _check_adjoint_input(self, y) -> np.ndarray:
        return _as_vector(y, self.rows, f"adjoint of {self.rows}x{self.cols} operator")


class Identity(LinearOperator):
    def __init__(self, n: int):
        super().__init__(n, n)

    def apply(self, x):
        return self._check_input(x)

    def apply_adjoint(self, y):
        return self._check_adjoint_input(y)

    def abs_pow_row_sums(self, p):
        _check_power(p)
        return np.ones(self.rows)

    def abs_pow_col_sums(self, p):
        _check_power(p)
        return np.ones(self.cols)


class DiagonalOperator(LinearOperator):
    def __init__(self, entries):
        entries = np.asarray(entries, dtype=np.float64)
        if entries.ndim != 1:
            raise ValueError("diagonal entries must be a vector")
        super().__init__(entries.size, entries.size)
        self.entries = entries

    def apply(self, x):
        return self.entries * self._check_input(x)

    def apply_adjoint(self, y):
        return self.entries * self._check_adjoint_input(y)

    def abs_pow_row_sums(self, p):
        _check_power(p)
        return _abs_pow(self.entries, p)

    def abs_pow_col_sums(self, p):
        _check_power(p)
        return _abs_pow(self.entries, p)


class SparseMatrix(LinearOperator):
    """Sparse matrix in compressed-row storage.

    Accepts a dense array, a scipy sparse matrix, or anything
    ``scipy.sparse.csr_matrix`` accepts. Stored in canonical CSR form
    (sorted column indices, duplicates summed); the transpose is cached
    so that repeated adjoint products stay cheap.
    """

    def __init__(self, matrix):
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.sort_indices()
        super().__init__(*csr.shape)
        self._csr = csr
        self._csr_t = csr.T.tocsr()

    @classmethod
    def from_coo(cls, row_indices, col_indices, values, shape) -> "SparseMatrix":
        return cls(sp.coo_matrix((values, (row_indices, col_indices)), shape=shape))

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._csr

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def apply(self, x):
        return self._csr @ self._check_input(x)

    def apply_adjoint(self, y):
        return self._csr_t @ self._check_adjoint_input(y)

    def abs_pow_row_sums(self, p):
        _check_power(p)
        powered = self._csr.copy()
        powered.data = _abs_pow(powered.data, p)
        return np.asarray(powered.sum(axis=1)).ravel()

    def abs_pow_col_sums(self, p):
        _check_power(p)
        powered = self._csr.copy()
        powered.data = _abs_pow(powered.data, p)
        return np.asarray(powered.sum(axis=0)).ravel()


class Grad2D(LinearOperator):
    """Forward-difference gradient of an n-by-n image, flattened row-major.

    Acts as the stacked matrix [I kron B; B kron I] where B is the n-by-n
    forward-difference matrix with a zero last row, without materializing
    it. The first n^2 output entries are horizontal (within-row)
    differences, the second n^2 are vertical (row-to-row) differences;
    replicate boundary, so the last column/row of differences is zero.
    """

    def __init__(self, n: int):
        n = int(n)
        if n < 1:
            raise ValueError(f"image side length must be >= 1, got {n}")
        super().__init__(2 * n * n, n * n)
        self.n = n

    def apply(self, x):
        n = self.n
        img = self._check_input(x).reshape(n, n)
        out = np.zeros((2, n, n))
        out[0, :, :-1] = img[:, 1:] - img[:, :-1]
        out[1, :-1, :] = img[1:, :] - img[:-1, :]
        return out.reshape(2 * n * n)

    def apply_adjoint(self, y):
        n = self.n
        y = self._check_adjoint_input(y).reshape(2, n, n)
        out = np.zeros((n, n))
        out[:, :-1] -= y[0, :, :-1]
        out[:, 1:] += y[0, :, :-1]
        out[:-1, :] -= y[1, :-1, :]
        out[1:, :] += y[1, :-1, :]
        return out.reshape(n * n)

    def abs_pow_row_sums(self, p):
        # every nonzero row holds exactly {-1, +1}; zero rows come from
        # the zero last row of B
        _check_power(p)
        n = self.n
        horizontal = np.tile(np.r_[np.full(n - 1, 2.0), 0.0], n)
        vertical = np.r_[np.full(n * (n - 1), 2.0), np.zeros(n)]
        return np.concatenate([horizontal, vertical])

    def abs_pow_col_sums(self, p):
        # all entries have magnitude 1, so every power sums to the
        # per-column nonzero count (at most 4)
        _check_power(p)
        n = self.n
        rows_idx, cols_idx = np.divmod(np.arange(n * n), n)
        count = np.zeros(n * n)
        for present in (cols_idx >= 1, cols_idx <= n - 2, rows_idx >= 1, rows_idx <= n - 2):
            count += present
        return count


class StackedOperator(LinearOperator):
    """Vertical concatenation of operators sharing a common domain."""

    def __init__(self, blocks: Sequence[LinearOperator]):
        blocks = tuple(blocks)
        if not blocks:
            raise ValueError("stack requires at least one operator")
        cols = blocks[0].cols
        for block in blocks[1:]:
            if block.cols != cols:
                raise ValueError(
                    f"stacked blocks must share a domain: got {block.cols} columns, expected {cols}"
                )
        super().__init__(sum(b.rows for b in blocks), cols)
        self.blocks = blocks
        self.offsets = np.concatenate([[0], np.cumsum([b.rows for b in blocks])])

    def split(self, y) -> list[np.ndarray]:
        """Partition a stacked range vector into per-block pieces."""
        y = self._check_adjoint_input(y)
        return [y[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.blocks))]

    def apply(self, x):
        x = self._check_input(x)
        return np.concatenate([b.apply(x) for b in self.blocks])

    def apply_adjoint(self, y):
        parts = self.split(y)
        out = self.blocks[0].apply_adjoint(parts[0])
        for block, part in zip(self.blocks[1:], parts[1:]):
            out = out + block.apply_adjoint(part)
        return out

    def abs_pow_row_sums(self, p):
        return np.concatenate([b.abs_pow_row_sums(p) for b in self.blocks])

    def abs_pow_col_sums(self, p):
        total = self.blocks[0].abs_pow_col_sums(p)
        for block in self.blocks[1:]:
            total = total + block.abs_pow_col_sums(p)
        return total


class ComposedOperator(LinearOperator):
    """Product ops[0] @ ops[1] @ ... @ ops[-1] (rightmost applied first)."""

    def __init__(self, ops: Sequence[LinearOperator]):
        ops = tuple(ops)
        if not ops:
            raise ValueError("composition requires at least one operator")
        for left, right in zip(ops, ops[1:]):
            if left.cols != right.rows:
                raise ValueError(
                    f"cannot compose {left.rows}x{left.cols} with {right.rows}x{right.cols}"
                )
        super().__init__(ops[0].rows, ops[-1].cols)
        self.ops = ops

    def apply(self, x):
        out = self._check_input(x)
        for op in reversed(self.ops):
            out = op.apply(out)
        return out

    def apply_adjoint(self, y):
        out = self._check_adjoint_input(y)
        for op in self.ops:
            out = op.apply_adjoint(out)
        return out


def grad_2d(n: int) -> Grad2D:
    """Gradient operator of shape (2*n^2, n^2) for an n-by-n image."""
    return Grad2D(n)


def stack(ops: Sequence[LinearOperator]) -> StackedOperator:
    """Stack operators with a common domain into one block-row operator."""
    return StackedOperator(ops)


def power_iteration(op: LinearOperator, max_iters: int = 1000, tol: float = 1e-12,
                    seed: int = 0, return_vector: bool = False):
    """Estimate the spectral norm (largest singular value) of ``op``.

    Iterates v <- K*(K v) from a seeded pseudorandom unit start vector and
    returns the square root of the Rayleigh quotient of K*K, i.e.
    ||K v|| / ||v||. The estimate is monotone nondecreasing, hence always a
    certified lower bound on the true norm. Iteration stops once two
    successive estimates agree to a relative ``tol`` or after
    ``max_iters`` rounds.

    With ``return_vector=True`` also returns the iterate the estimate was
    measured at.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if op.cols == 0 or op.rows == 0:
        result = 0.0
        return (result, np.zeros(op.cols)) if return_vector else result

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.cols)
    v /= np.linalg.norm(v)

    estimate = 0.0
    previous = None
    for _ in range(max_iters):
        w = op.apply(v)
        estimate = float(np.linalg.norm(w))
        if estimate == 0.0:
            break
        if previous is not None and abs(estimate - previous) <= tol * estimate:
            break
        previous = estimate
        u = op.apply_adjoint(w)
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            break
        v = u / norm_u
    return (estimate, v) if return_vector else estimate


def build_preconditioners(ops: Sequence[LinearOperator], alpha: float):
    """Diagonal step metrics from absolute-power row/column sums.

    For a family of operators K_k sharing a domain, returns the primal
    metric T with entries tau_j = 1 / sum_k sum_i |K_k(i,j)|^(2-alpha) and
    one dual metric per block with entries sigma_i = 1 / sum_j |K_k(i,j)|^alpha.
    Coordinates whose denominator vanishes (the operator is identically
    zero there) receive step 1.0, which keeps the metrics positive without
    affecting the norm bound ||Sigma^(1/2) K T^(1/2)|| <= 1.
    """
    if not 0.0 <= alpha <= 2.0:
        raise ValueError(f"alpha must lie in [0, 2], got {alpha}")
    ops = tuple(ops)
    if not ops:
        raise ValueError("build_preconditioners requires at least one operator")
    cols = ops[0].cols
    for op in ops[1:]:
        if op.cols != cols:
            raise ValueError("operators must share a common domain")

    col_denominator = ops[0].abs_pow_col_sums(2.0 - alpha)
    for op in ops[1:]:
        col_denominator = col_denominator + op.abs_pow_col_sums(2.0 - alpha)

    sigmas = [DiagonalMetric(_safe_inverse(op.abs_pow_row_sums(alpha))) for op in ops]
    return DiagonalMetric(_safe_inverse(col_denominator)), sigmas


def write_matrix_market(op: SparseMatrix, path):
    """Write a SparseMatrix in Matrix Market coordinate format.

    Values carry 17 significant digits, enough for an exact decimal
    round trip of IEEE doubles.
    """
    mmwrite(str(path), op.matrix, field="real", precision=17)


def read_matrix_market(path) -> SparseMatrix:
    return SparseMatrix(mmread(str(path)))
