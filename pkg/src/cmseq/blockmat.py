"""Dense block matrices, positive-definite factorization and block-pattern tests.

A sequence ``x_0, ..., x_N`` of ``d``-vectors has a joint covariance (and
precision) made of ``(N+1) x (N+1)`` blocks of size ``d x d``.  The class
membership of a nonsingular Gaussian sequence can be read off the zero
pattern of its precision:

* Markov      -- block tri-diagonal,
* CM_L        -- tri-diagonal plus a dense last block row/column,
* CM_F        -- tri-diagonal plus a dense first block row/column,
* reciprocal  -- cyclic tri-diagonal (band plus the two corner blocks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, IndexOutOfRange, NotPositiveDefinite

DEFAULT_TOL = 1e-8
SYMMETRY_TOL = 1e-9


class BlockMatrix:
    """Square matrix addressed by ``d x d`` blocks.

    Parameters
    ----------
    data : array_like, shape ((N+1)*d, (N+1)*d)
    block_dim : int
        Size ``d`` of each block.
    symmetric : bool
        If True, reject data with ``max|A - A'| > SYMMETRY_TOL * (1 + max|A|)``
        and store the symmetrized matrix.
    """

    def __init__(self, data, block_dim: int, symmetric: bool = False):
        data = np.array(data, dtype=float)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {data.shape}")
        if block_dim < 1 or data.shape[0] % block_dim:
            raise DimensionMismatch(
                f"size {data.shape[0]} is not a multiple of block_dim={block_dim}"
            )
        if symmetric:
            asym = np.max(np.abs(data - data.T), initial=0.0)
            if asym > SYMMETRY_TOL * (1.0 + np.max(np.abs(data), initial=0.0)):
                raise DimensionMismatch(f"matrix is not symmetric (max asymmetry {asym:.3e})")
            data = 0.5 * (data + data.T)
        self.data = data
        self.block_dim = int(block_dim)
        self.symmetric = symmetric

    @property
    def n_blocks(self) -> int:
        return self.data.shape[0] // self.block_dim

    def _slice(self, i: int) -> slice:
        if not 0 <= i < self.n_blocks:
            raise IndexOutOfRange(f"block index {i} outside [0, {self.n_blocks - 1}]")
        return slice(i * self.block_dim, (i + 1) * self.block_dim)

    def block(self, i: int, j: int) -> np.ndarray:
        return self.data[self._slice(i), self._slice(j)]

    def indices(self, blocks) -> np.ndarray:
        """Scalar row indices covering the given block indices, in order."""
        d = self.block_dim
        return np.array([b * d + r for b in blocks for r in range(d)], dtype=int)

    def submatrix(self, rows, cols=None) -> np.ndarray:
        cols = rows if cols is None else cols
        return self.data[np.ix_(self.indices(rows), self.indices(cols))]

    def principal(self, blocks) -> "BlockMatrix":
        return BlockMatrix(self.submatrix(list(blocks)), self.block_dim, self.symmetric)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data), initial=0.0))

    def block_max_abs(self) -> np.ndarray:
        """``(n, n)`` array whose ``(i, j)`` entry is the max-abs entry of block ``(i, j)``."""
        n, d = self.n_blocks, self.block_dim
        return np.abs(self.data).reshape(n, d, n, d).max(axis=(1, 3))

    @classmethod
    def from_blocks(cls, blocks, symmetric: bool = False) -> "BlockMatrix":
        blocks = [[np.atleast_2d(np.asarray(b, dtype=float)) for b in row] for row in blocks]
        return cls(np.block(blocks), blocks[0][0].shape[0], symmetric)

    @classmethod
    def zeros(cls, n_blocks: int, block_dim: int) -> "BlockMatrix":
        n = n_blocks * block_dim
        return cls(np.zeros((n, n)), block_dim)

    def to_json(self) -> dict:
        return {
            "n_blocks": self.n_blocks,
            "block_dim": self.block_dim,
            "rows": self.data.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict, symmetric: bool = True) -> "BlockMatrix":
        try:
            n_blocks, block_dim, rows = obj["n_blocks"], obj["block_dim"], obj["rows"]
        except KeyError as exc:
            raise DimensionMismatch(f"matrix JSON is missing field {exc.args[0]!r}") from None
        out = cls(rows, block_dim, symmetric=symmetric)
        if out.n_blocks != n_blocks:
            raise DimensionMismatch(
                f"n_blocks={n_blocks} but rows describe {out.n_blocks} blocks of size {block_dim}"
            )
        return out

    def __repr__(self) -> str:
        return f"BlockMatrix(n_blocks={self.n_blocks}, block_dim={self.block_dim})"


class PDFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix."""

    def __init__(self, lower: np.ndarray):
        self.lower = lower

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.size:
            raise DimensionMismatch(f"rhs has {b.shape[0]} rows, factor has size {self.size}")
        return scipy.linalg.cho_solve((self.lower, True), b)

    def inverse(self) -> np.ndarray:
        inv = self.solve(np.eye(self.size))
        return 0.5 * (inv + inv.T)

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.lower))))


def factor_pd(a, what: str = "matrix") -> PDFactor:
    """Cholesky-factor ``a``; raise :class:`NotPositiveDefinite` on failure.

    ``a`` may be a :class:`BlockMatrix` or any square array.  ``what`` names the
    matrix in error messages.
    """
    arr = a.data if isinstance(a, BlockMatrix) else np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{what}: expected a square matrix, got shape {arr.shape}")
    scale = 1.0 + np.max(np.abs(arr), initial=0.0)
    if np.max(np.abs(arr - arr.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise DimensionMismatch(f"{what} is not symmetric")
    if not np.all(np.isfinite(arr)):
        raise NotPositiveDefinite(f"{what} has non-finite entries")
    try:
        lower = scipy.linalg.cholesky(0.5 * (arr + arr.T), lower=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{what} is not positive definite") from None
    return PDFactor(lower)


def pd_inverse(a, what: str = "matrix") -> np.ndarray:
    return factor_pd(a, what).inverse()


def is_pd(a) -> bool:
    try:
        factor_pd(a)
    except (NotPositiveDefinite, DimensionMismatch):
        return False
    return True


# --- structure predicates -------------------------------------------------

PATTERNS = ("tridiagonal", "cyclic", "cml", "cmf")


def allowed_mask(n_blocks: int, pattern: str) -> np.ndarray:
    """Boolean ``(n, n)`` mask of the blocks that may be nonzero under ``pattern``."""
    i, j = np.indices((n_blocks, n_blocks))
    band = np.abs(i - j) <= 1
    last = n_blocks - 1
    if pattern == "tridiagonal":
        return band
    if pattern == "cml":
        return band | (i == last) | (j == last)
    if pattern == "cmf":
        return band | (i == 0) | (j == 0)
    if pattern == "cyclic":
        return band | ((i == 0) & (j == last)) | ((i == last) & (j == 0))
    raise ValueError(f"unknown pattern {pattern!r}")


@dataclass(frozen=True)
class StructureReport:
    is_tridiagonal: bool
    is_cyclic_tridiagonal: bool
    is_cml_form: bool
    is_cmf_form: bool
    max_offband_residual: float
    tolerance_used: float
    residuals: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "is_tridiagonal": self.is_tridiagonal,
            "is_cyclic_tridiagonal": self.is_cyclic_tridiagonal,
            "is_cml_form": self.is_cml_form,
            "is_cmf_form": self.is_cmf_form,
            "max_offband_residual": self.max_offband_residual,
            "tolerance_used": self.tolerance_used,
            "residuals": dict(self.residuals),
        }


def structure_classify(J: BlockMatrix, tol: float = DEFAULT_TOL) -> StructureReport:
    """Test the zero pattern of a symmetric block matrix.

    A block counts as zero when its max-abs entry is at most
    ``tol * (1 + max|J|)``.  Residuals are the largest max-abs entry among the
    blocks each pattern requires to vanish.
    """
    if not isinstance(J, BlockMatrix):
        raise DimensionMismatch("structure_classify expects a BlockMatrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    threshold = tol * (1.0 + J.max_abs())
    mags = J.block_max_abs()
    residuals = {}
    for pattern in PATTERNS:
        outside = mags[~allowed_mask(J.n_blocks, pattern)]
        residuals[pattern] = float(outside.max(initial=0.0))
    return StructureReport(
        is_tridiagonal=residuals["tridiagonal"] <= threshold,
        is_cyclic_tridiagonal=residuals["cyclic"] <= threshold,
        is_cml_form=residuals["cml"] <= threshold,
        is_cmf_form=residuals["cmf"] <= threshold,
        max_offband_residual=residuals["tridiagonal"],
        tolerance_used=threshold,
        residuals=residuals,
    )


def schur_window(J: BlockMatrix, k1: int, k2: int) -> BlockMatrix:
    """Precision of the marginal of ``x_{k1..k2}`` where the window touches an end.

    For ``k1 == 0`` the trailing blocks ``k2+1..N`` are eliminated
    (``A11 - A12 A22^{-1} A21``); for ``k2 == N`` the leading blocks
    ``0..k1-1`` are eliminated (``A22 - A21 A11^{-1} A12``).
    """
    N = J.n_blocks - 1
    if k1 == 0 and k2 == N:
        return J
    if k1 == 0:
        if not 1 <= k2 <= N - 1:
            raise IndexOutOfRange(f"k2={k2} must lie in [1, {N - 1}]")
        keep, drop = range(0, k2 + 1), range(k2 + 1, N + 1)
    elif k2 == N:
        if not 1 <= k1 <= N - 1:
            raise IndexOutOfRange(f"k1={k1} must lie in [1, {N - 1}]")
        keep, drop = range(k1, N + 1), range(0, k1)
    else:
        raise IndexOutOfRange(f"window [{k1}, {k2}] must start at 0 or end at N={N}")
    a_keep = J.submatrix(keep)
    a_cross = J.submatrix(keep, drop)
    a_drop = factor_pd(J.submatrix(drop), "eliminated precision block")
    delta = a_keep - a_cross @ a_drop.solve(a_cross.T)
    return BlockMatrix(0.5 * (delta + delta.T), J.block_dim, symmetric=True)


def schur_window_classify(
    J: BlockMatrix, k1: int, k2: int, c: str, tol: float = DEFAULT_TOL
) -> bool:
    """Decide ``[k1, k2]``-CM_c membership from a precision matrix.

    ``c`` is ``"L"`` (condition on the last time of the window) or ``"F"``
    (condition on the first).
    """
    factor_pd(J, "precision")
    report = structure_classify(schur_window(J, k1, k2), tol)
    if c == "L":
        return report.is_cml_form
    if c == "F":
        return report.is_cmf_form
    raise ValueError(f"direction must be 'L' or 'F', got {c!r}")
