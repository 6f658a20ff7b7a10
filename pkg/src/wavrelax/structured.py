"""Block-structured square matrices.

An ``m x m`` matrix is stored as a ``q x q`` grid of ``p x p`` blocks, each
block tagged with a symbolic kind.  Only nonzero blocks are kept.  The kinds
are closed under the linear combinations the solvers need, so operators such as
``M_A + h M_1`` keep a structure that the factorization can exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import DimensionError

DENSE_LIMIT = 64


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Zero:
    def dense(self, p: int) -> np.ndarray:
        return np.zeros((p, p))


@dataclass(frozen=True)
class ScaledIdentity:
    s: float

    def dense(self, p: int) -> np.ndarray:
        return self.s * np.eye(p)


@dataclass(frozen=True)
class Tridiagonal:
    """Constant-coefficient tridiagonal block."""

    sub: float
    diag: float
    sup: float

    def dense(self, p: int) -> np.ndarray:
        return (self.diag * np.eye(p) + self.sub * np.eye(p, k=-1)
                + self.sup * np.eye(p, k=1))


@dataclass(frozen=True, eq=False)
class DiagonalVec:
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))

    def __eq__(self, other):
        return (isinstance(other, DiagonalVec)
                and np.array_equal(self.entries, other.entries))

    def dense(self, p: int) -> np.ndarray:
        return np.diag(self.entries)


@dataclass(frozen=True, eq=False)
class Dense:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    def __eq__(self, other):
        return isinstance(other, Dense) and np.array_equal(self.values, other.values)

    def dense(self, p: int) -> np.ndarray:
        return np.array(self.values)


Block = Union[Zero, ScaledIdentity, Tridiagonal, DiagonalVec, Dense]


def normalize(block: Block, p: int) -> Block:
    """Reduce a block to the simplest kind with the same expanded value."""
    if isinstance(block, ScaledIdentity):
        return Zero() if block.s == 0 else block
    if isinstance(block, Tridiagonal):
        if p == 1 or (block.sub == 0 and block.sup == 0):
            return normalize(ScaledIdentity(block.diag), p)
        return block
    if isinstance(block, DiagonalVec):
        e = block.entries
        if np.all(e == e[0]):
            return normalize(ScaledIdentity(float(e[0])), p)
        return block
    if isinstance(block, Dense):
        if not np.any(block.values):
            return Zero()
    return block


def block_scale(block: Block, a: float) -> Block:
    if isinstance(block, Zero) or a == 0:
        return Zero()
    if isinstance(block, ScaledIdentity):
        return ScaledIdentity(a * block.s)
    if isinstance(block, Tridiagonal):
        return Tridiagonal(a * block.sub, a * block.diag, a * block.sup)
    if isinstance(block, DiagonalVec):
        return DiagonalVec(a * block.entries)
    return Dense(a * block.values)


def _as_tridiagonal(block: Block) -> Tridiagonal:
    if isinstance(block, ScaledIdentity):
        return Tridiagonal(0.0, block.s, 0.0)
    return block


def _as_diagonal(block: Block, p: int) -> np.ndarray:
    if isinstance(block, ScaledIdentity):
        return np.full(p, block.s)
    return block.entries


def block_add(x: Block, y: Block, p: int) -> Block:
    """Sum of two blocks, keeping the narrowest kind that represents it."""
    if isinstance(x, Zero):
        return normalize(y, p)
    if isinstance(y, Zero):
        return normalize(x, p)
    if isinstance(x, ScaledIdentity) and isinstance(y, ScaledIdentity):
        return normalize(ScaledIdentity(x.s + y.s), p)
    tri = (ScaledIdentity, Tridiagonal)
    if isinstance(x, tri) and isinstance(y, tri):
        tx, ty = _as_tridiagonal(x), _as_tridiagonal(y)
        return normalize(Tridiagonal(tx.sub + ty.sub, tx.diag + ty.diag,
                                     tx.sup + ty.sup), p)
    diag = (ScaledIdentity, DiagonalVec)
    if isinstance(x, diag) and isinstance(y, diag):
        return normalize(DiagonalVec(_as_diagonal(x, p) + _as_diagonal(y, p)), p)
    return normalize(Dense(x.dense(p) + y.dense(p)), p)


def block_matvec(block: Block, x: np.ndarray) -> np.ndarray:
    if isinstance(block, ScaledIdentity):
        return block.s * x
    if isinstance(block, Tridiagonal):
        out = block.diag * x
        out[1:] += block.sub * x[:-1]
        out[:-1] += block.sup * x[1:]
        return out
    if isinstance(block, DiagonalVec):
        return block.entries * x
    if isinstance(block, Dense):
        return block.values @ x
    return np.zeros_like(x)


def block_max_abs(block: Block, p: int) -> float:
    if isinstance(block, Zero):
        return 0.0
    if isinstance(block, ScaledIdentity):
        return abs(block.s)
    if isinstance(block, Tridiagonal):
        return max(abs(block.sub), abs(block.diag), abs(block.sup))
    if isinstance(block, DiagonalVec):
        return float(np.max(np.abs(block.entries)))
    return float(np.max(np.abs(block.values)))


@dataclass(frozen=True)
class StructuredMatrix:
    """Square matrix of ``q x q`` blocks of size ``p``; absent blocks are zero."""

    p: int
    q: int
    blocks: Mapping[tuple[int, int], Block] = field(default_factory=dict)

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError(f"block size and count must be positive, got p={self.p}, q={self.q}")
        cleaned = {}
        for (i, j), b in dict(self.blocks).items():
            if not (0 <= i < self.q and 0 <= j < self.q):
                raise ValueError(f"block index ({i}, {j}) outside {self.q}x{self.q} grid")
            if isinstance(b, DiagonalVec) and b.entries.shape != (self.p,):
                raise ValueError(f"DiagonalVec block needs {self.p} entries, got {b.entries.shape}")
            if isinstance(b, Dense) and b.values.shape != (self.p, self.p):
                raise ValueError(f"Dense block needs shape ({self.p}, {self.p}), got {b.values.shape}")
            b = normalize(b, self.p)
            if not isinstance(b, Zero):
                cleaned[(i, j)] = b
        object.__setattr__(self, "blocks", cleaned)

    @property
    def m(self) -> int:
        return self.p * self.q

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.m)

    def block(self, i: int, j: int) -> Block:
        return self.blocks.get((i, j), Zero())

    def with_block(self, i: int, j: int, block: Block) -> "StructuredMatrix":
        blocks = dict(self.blocks)
        blocks[(i, j)] = block
        return StructuredMatrix(self.p, self.q, blocks)

    def entry(self, r: int, c: int) -> float:
        """Single scalar entry, without expanding the matrix."""
        i, a = divmod(r, self.p)
        j, b = divmod(c, self.p)
        blk = self.block(i, j)
        if isinstance(blk, Zero):
            return 0.0
        if isinstance(blk, ScaledIdentity):
            return blk.s if a == b else 0.0
        if isinstance(blk, Tridiagonal):
            return {-1: blk.sub, 0: blk.diag, 1: blk.sup}.get(b - a, 0.0)
        if isinstance(blk, DiagonalVec):
            return float(blk.entries[a]) if a == b else 0.0
        return float(blk.values[a, b])

    def to_dense(self, allow_large: bool = False) -> np.ndarray:
        """Expand to a full array.  Meant for oracles on small instances."""
        if self.m > DENSE_LIMIT and not allow_large:
            raise ValueError(f"dense expansion limited to m <= {DENSE_LIMIT} (m={self.m}); "
                             "pass allow_large=True for diagnostics")
        p = self.p
        out = np.zeros((self.m, self.m))
        for (i, j), b in self.blocks.items():
            out[i * p:(i + 1) * p, j * p:(j + 1) * p] = b.dense(p)
        return out

    def max_abs(self) -> float:
        return max((block_max_abs(b, self.p) for b in self.blocks.values()), default=0.0)

    def diagonal_blocks_only(self) -> bool:
        return all(i == j for i, j in self.blocks)

    def __matmul__(self, v):
        return matvec(self, v)

    @cached_property
    def _plan(self):
        """Blocks grouped by kind into index and coefficient arrays."""
        p = self.p
        diag, tri, dense = [], [], []
        for (i, j), b in self.blocks.items():
            if isinstance(b, ScaledIdentity):
                diag.append((i, j, np.full(p, b.s)))
            elif isinstance(b, DiagonalVec):
                diag.append((i, j, b.entries))
            elif isinstance(b, Tridiagonal):
                tri.append((i, j, (b.sub, b.diag, b.sup)))
            else:
                dense.append((i, j, b.values))
        groups = []
        for kind, items in (("diag", diag), ("tri", tri), ("dense", dense)):
            if items:
                rows = np.array([it[0] for it in items])
                cols = np.array([it[1] for it in items])
                coef = np.array([it[2] for it in items], dtype=float)
                unique = len(set(rows.tolist())) == len(rows)
                groups.append((kind, rows, cols, coef, unique))
        return groups


def matvec(M: StructuredMatrix, v) -> np.ndarray:
    """Blockwise product ``M @ v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (M.m,):
        raise DimensionError(f"matvec: matrix is {M.m}x{M.m} but vector has shape {v.shape}")
    return _apply(M, v.reshape(1, M.q, M.p)).reshape(M.m)


def matvec_rows(M: StructuredMatrix, X) -> np.ndarray:
    """``M @ X[n]`` for every row ``n`` of a 2D array."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != M.m:
        raise DimensionError(f"matvec_rows: matrix is {M.m}x{M.m} but array has shape {X.shape}")
    return _apply(M, X.reshape(len(X), M.q, M.p)).reshape(X.shape)


def _apply(M: StructuredMatrix, xb: np.ndarray) -> np.ndarray:
    out = np.zeros_like(xb)
    for kind, rows, cols, coef, unique in M._plan:
        x = xb[:, cols]
        if kind == "diag":
            contrib = coef * x
        elif kind == "tri":
            sub, dia, sup = (coef[:, k, None] for k in range(3))
            contrib = dia * x
            contrib[..., 1:] += sub * x[..., :-1]
            contrib[..., :-1] += sup * x[..., 1:]
        else:
            contrib = np.einsum("bij,nbj->nbi", coef, x)
        if unique:
            out[:, rows] += contrib
        else:
            np.add.at(out, (slice(None), rows), contrib)
    return out


def combine(a: float, M: StructuredMatrix, b: float, N: StructuredMatrix) -> StructuredMatrix:
    """Linear combination ``a*M + b*N`` with block kinds merged."""
    if (M.p, M.q) != (N.p, N.q):
        raise DimensionError(f"combine: shapes differ, (p, q) = {(M.p, M.q)} vs {(N.p, N.q)}")
    blocks = {}
    for key in set(M.blocks) | set(N.blocks):
        blocks[key] = block_add(block_scale(M.block(*key), a),
                                block_scale(N.block(*key), b), M.p)
    return StructuredMatrix(M.p, M.q, blocks)


def scale_columns(M: StructuredMatrix, d) -> StructuredMatrix:
    """``M @ diag(d)``."""
    d = np.asarray(d, dtype=float)
    if d.shape != (M.m,):
        raise DimensionError(f"scale_columns: matrix is {M.m}x{M.m}, weights have shape {d.shape}")
    p = M.p
    blocks = {}
    for (i, j), b in M.blocks.items():
        dj = d[j * p:(j + 1) * p]
        if isinstance(b, ScaledIdentity):
            blocks[(i, j)] = DiagonalVec(b.s * dj)
        elif isinstance(b, DiagonalVec):
            blocks[(i, j)] = DiagonalVec(b.entries * dj)
        else:
            blocks[(i, j)] = Dense(b.dense(p) * dj[None, :])
    return StructuredMatrix(M.p, M.q, blocks)


def zeros(p: int, q: int) -> StructuredMatrix:
    return StructuredMatrix(p, q, {})


def identity(p: int, q: int, s: float = 1.0) -> StructuredMatrix:
    return StructuredMatrix(p, q, {(i, i): ScaledIdentity(s) for i in range(q)})


def block_diagonal(p: int, blocks: Iterable[Block]) -> StructuredMatrix:
    blocks = list(blocks)
    return StructuredMatrix(p, len(blocks), {(i, i): b for i, b in enumerate(blocks)})


def block_tridiagonal(p: int, q: int, diag: Block, off: Block) -> StructuredMatrix:
    """Block Toeplitz tridiagonal matrix with symmetric off-diagonal blocks."""
    blocks = {(i, i): diag for i in range(q)}
    for i in range(q - 1):
        blocks[(i, i + 1)] = off
        blocks[(i + 1, i)] = off
    return StructuredMatrix(p, q, blocks)
