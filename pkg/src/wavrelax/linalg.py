"""Factorizations of structured matrices and a power-iteration radius estimate.

Three solve paths exist, picked from the block pattern at factorization time:

``diagonal``
    every block off the diagonal is zero and the diagonal blocks are diagonal;
    solving is elementwise division.
``block_thomas``
    block diagonal with tridiagonal (or scaled identity) blocks; each block is
    eliminated with the Thomas algorithm, all blocks at once.
``banded``
    anything else; banded LU with partial pivoting (LAPACK ``gbtrf``) on the
    scalar bandwidth implied by the nonzero blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionError, SingularMatrixError
from .structured import DiagonalVec, ScaledIdentity, StructuredMatrix, Tridiagonal

SINGULAR_RTOL = 1e-14

DIAGONAL = "diagonal"
BLOCK_THOMAS = "block_thomas"
BANDED = "banded"


@dataclass(frozen=True)
class BandFactorization:
    """Reusable factorization of a :class:`StructuredMatrix`.

    ``factors`` holds path-specific arrays: the diagonal for ``diagonal``,
    ``(sub, denom, cprime)`` for ``block_thomas`` and the LAPACK band LU for
    ``banded``; ``permutation`` is the LAPACK pivot record (banded path only).
    """

    path: str
    m: int
    p: int
    bandwidth: tuple[int, int]
    factors: tuple
    permutation: np.ndarray | None = None


def bandwidth(M: StructuredMatrix) -> tuple[int, int]:
    """Scalar (lower, upper) bandwidth implied by the nonzero blocks."""
    p = M.p
    lo, hi = 0, 0
    for (i, j), b in M.blocks.items():
        d = (j - i) * p
        if isinstance(b, (ScaledIdentity, DiagonalVec)):
            spread = 0
        elif isinstance(b, Tridiagonal):
            spread = 1
        else:
            spread = p - 1
        lo = max(lo, -(d - spread))
        hi = max(hi, d + spread)
    return lo, hi


def _check_pivots(pivots: np.ndarray, scale: float) -> None:
    bad = np.flatnonzero(~(np.abs(pivots) >= SINGULAR_RTOL * scale))
    if bad.size:
        row = int(bad[0])
        raise SingularMatrixError(row, float(pivots[row]), scale)


def _solve_path(M: StructuredMatrix) -> str:
    if not M.diagonal_blocks_only():
        return BANDED
    kinds = {type(b) for b in M.blocks.values()}
    if kinds <= {ScaledIdentity, DiagonalVec}:
        return DIAGONAL
    if kinds <= {ScaledIdentity, Tridiagonal}:
        return BLOCK_THOMAS
    return BANDED


def factorize(M: StructuredMatrix) -> BandFactorization:
    """Factorize ``M`` along the cheapest applicable path.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-14 * max|M_ij|``.
    """
    scale = M.max_abs()
    if scale == 0.0:
        raise SingularMatrixError(0, 0.0, 0.0)
    path = _solve_path(M)
    p, q = M.p, M.q

    if path == DIAGONAL:
        diag = np.zeros((q, p))
        for (i, _), b in M.blocks.items():
            diag[i] = b.s if isinstance(b, ScaledIdentity) else b.entries
        diag = diag.reshape(M.m)
        _check_pivots(diag, scale)
        return BandFactorization(DIAGONAL, M.m, p, (0, 0), (diag,))

    if path == BLOCK_THOMAS:
        sub = np.zeros(q)
        dia = np.zeros(q)
        sup = np.zeros(q)
        for (i, _), b in M.blocks.items():
            if isinstance(b, ScaledIdentity):
                dia[i] = b.s
            else:
                sub[i], dia[i], sup[i] = b.sub, b.diag, b.sup
        denom = np.empty((q, p))
        cprime = np.zeros((q, p))
        denom[:, 0] = dia
        # zero pivots are reported by _check_pivots, not as numpy warnings
        with np.errstate(divide="ignore", invalid="ignore"):
            for k in range(p):
                if k > 0:
                    denom[:, k] = dia - sub * cprime[:, k - 1]
                cprime[:, k] = sup / denom[:, k]
        _check_pivots(denom.reshape(M.m), scale)
        return BandFactorization(BLOCK_THOMAS, M.m, p, (1, 1) if p > 1 else (0, 0),
                                 (sub, denom, cprime))

    kl, ku = bandwidth(M)
    ab = np.zeros((2 * kl + ku + 1, M.m))
    for (i, j), b in M.blocks.items():
        rows, cols = np.nonzero(b.dense(p))
        vals = b.dense(p)[rows, cols]
        r = rows + i * p
        c = cols + j * p
        ab[kl + ku + r - c, c] = vals
    lu, piv, info = lapack.dgbtrf(ab, kl, ku)
    if info < 0:
        raise ValueError(f"dgbtrf: illegal argument {-info}")
    _check_pivots(lu[kl + ku], scale)
    return BandFactorization(BANDED, M.m, p, (kl, ku), (lu,), piv)


def solve(F: BandFactorization, rhs) -> np.ndarray:
    """Solve ``M x = rhs`` with a factorization of ``M``."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (F.m,):
        raise DimensionError(f"solve: factorization is for m={F.m}, rhs has shape {rhs.shape}")
    if F.path == DIAGONAL:
        return rhs / F.factors[0]
    if F.path == BLOCK_THOMAS:
        sub, denom, cprime = F.factors
        p = F.p
        d = rhs.reshape(-1, p)
        x = np.empty_like(d)
        x[:, 0] = d[:, 0] / denom[:, 0]
        for k in range(1, p):
            x[:, k] = (d[:, k] - sub * x[:, k - 1]) / denom[:, k]
        for k in range(p - 2, -1, -1):
            x[:, k] -= cprime[:, k] * x[:, k + 1]
        return x.reshape(F.m)
    kl, ku = F.bandwidth
    x, info = lapack.dgbtrs(F.factors[0], kl, ku, rhs, F.permutation)
    if info != 0:
        raise ValueError(f"dgbtrs failed with info={info}")
    return x


def spectral_radius_estimate(apply: Callable[[np.ndarray], np.ndarray], m: int,
                             iters: int = 200, seed: int = 0) -> float:
    """Power-iteration estimate of the largest eigenvalue magnitude of ``apply``.

    The growth factor is averaged geometrically over the second half of the
    iterations, which also handles a dominant complex-conjugate pair.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m)
    v /= np.linalg.norm(v)
    logs = []
    for _ in range(iters):
        w = apply(v)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        logs.append(np.log(nrm))
        v = w / nrm
    tail = logs[len(logs) // 2:]
    return float(np.exp(np.mean(tail)))
