"""Joint moments of the model families and sequence classification.

Every model is a stack of equations ``x_k - sum_j W_{k,j} x_j = e_k`` with
independent noises, so ``Gcal x = e`` for a nonsingular block matrix ``Gcal``
and ``C^{-1} = Gcal' G^{-1} Gcal``.  :func:`model_equations` is the single
source of those equations; :mod:`cmseq.simulate` generates from it too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .blockmat import (
    BlockMatrix,
    factor_pd,
    schur_window,
    structure_classify,
)
from .errors import DimensionMismatch, IndexOutOfRange, IndexOverlap
from .models import (
    Boundary,
    CML0k2Model,
    CMcModel,
    MarkovModel,
    ensure_valid,
)
from .transforms import Representation, validate_representation

CLASSIFY_TOL = 1e-7
SPLIT_TOL = 1e-9


@dataclass(frozen=True)
class Equation:
    """``x_k = sum_j weight_j x_j + e_k`` with ``Cov e_k = noise_cov``."""

    k: int
    terms: tuple
    noise_cov: np.ndarray


def model_equations(m) -> list[Equation]:
    """Equations of ``m`` in a valid generation order (parents before children)."""
    N = m.N
    if isinstance(m, MarkovModel):
        ensure_valid(m)
        eqs = [Equation(0, (), m.M(0))]
        eqs += [Equation(k, ((k - 1, m.A(k)),), m.M(k)) for k in range(1, N + 1)]
        return eqs
    if isinstance(m, CMcModel):
        ensure_valid(m)
        m.require_boundary()
        if m.direction == "L":
            eqs = [Equation(N, (), m.G(N)), Equation(0, ((N, m.coupling_at(0)),), m.G(0))]
            eqs += [Equation(k, ((k - 1, m.A(k)), (N, m.coupling_at(k))), m.G(k))
                    for k in range(1, N)]
            return eqs
        eqs = [Equation(0, (), m.G(0)), Equation(1, ((0, m.first_step),), m.G(1))]
        eqs += [Equation(k, ((k - 1, m.A(k)), (0, m.coupling_at(k))), m.G(k))
                for k in range(2, N + 1)]
        return eqs
    if isinstance(m, CML0k2Model):
        ensure_valid(m)
        k2 = m.k2
        wc, tg, tc = m.waypoint_coupling, m.terminal_gain, m.terminal_coupling
        eqs = [Equation(k2, (), m.G(k2)), Equation(0, ((k2, wc[0]),), m.G(0))]
        eqs += [Equation(k, ((k - 1, m.A(k)), (k2, wc[k])), m.G(k)) for k in range(1, k2)]
        eqs.append(Equation(N, tuple((i, tg[i]) for i in range(0, k2 + 1)), m.G(N)))
        eqs += [Equation(k, ((k - 1, m.A(k)), (N, tc[k])), m.G(k)) for k in range(k2 + 1, N)]
        return eqs
    raise TypeError(f"not a model: {type(m).__name__}")


def coefficient_matrix(m):
    """``(Gcal, [G_0..G_N])`` with ``Gcal`` unit block diagonal and ``-W_{k,j}`` off it."""
    d, n = m.d, m.N + 1
    gcal = np.eye(n * d)
    covs = [None] * n
    for eq in model_equations(m):
        rows = slice(eq.k * d, (eq.k + 1) * d)
        for j, w in eq.terms:
            gcal[rows, j * d:(j + 1) * d] -= w
        covs[eq.k] = eq.noise_cov
    return gcal, covs


def assemble_precision(m) -> BlockMatrix:
    """Joint precision ``Gcal' G^{-1} Gcal`` of any model family."""
    gcal, covs = coefficient_matrix(m)
    d = m.d
    ginv_gcal = np.vstack([
        factor_pd(covs[k], f"G_{k}").solve(gcal[k * d:(k + 1) * d]) for k in range(len(covs))
    ])
    J = gcal.T @ ginv_gcal
    return BlockMatrix(0.5 * (J + J.T), d, symmetric=True)


def model_covariance(m) -> BlockMatrix:
    """Joint covariance ``Gcal^{-1} G Gcal^{-T}``, computed without inverting the precision."""
    gcal, covs = coefficient_matrix(m)
    d = m.d
    noise = np.zeros_like(gcal)
    for k, g in enumerate(covs):
        noise[k * d:(k + 1) * d, k * d:(k + 1) * d] = g
    left = np.linalg.solve(gcal, noise)
    C = np.linalg.solve(gcal, left.T).T
    return BlockMatrix(0.5 * (C + C.T), d, symmetric=True)


def markov_joint_covariance(m: MarkovModel) -> BlockMatrix:
    """Joint covariance of a Markov model from the variance recursion and transition products."""
    ensure_valid(m, min_horizon=1)
    N, d = m.N, m.d
    marg = [m.M(0)]
    for k in range(1, N + 1):
        marg.append(m.A(k) @ marg[-1] @ m.A(k).T + m.M(k))
    out = np.zeros(((N + 1) * d, (N + 1) * d))
    for j in range(N + 1):
        block = marg[j]
        for i in range(j, N + 1):
            if i > j:
                block = m.A(i) @ block
            out[i * d:(i + 1) * d, j * d:(j + 1) * d] = block
            out[j * d:(j + 1) * d, i * d:(i + 1) * d] = block.T
    return BlockMatrix(out, d, symmetric=True)


def _as_cov(C) -> BlockMatrix:
    if not isinstance(C, BlockMatrix):
        raise DimensionMismatch("expected a BlockMatrix covariance")
    return C


def precision_of(C: BlockMatrix) -> BlockMatrix:
    return BlockMatrix(factor_pd(C, "covariance").inverse(), C.block_dim, symmetric=True)


# --- classification -----------------------------------------------------------

@dataclass(frozen=True)
class SequenceClassification:
    """Class flags read from the precision pattern.

    ``window_results`` holds ``(k1, "F", holds)`` for each ``[k1, N]`` window
    swept; ``windows_consistent`` compares the cyclic-pattern verdict with
    ``is_cml and is_cmf and every window``.
    """

    is_markov: bool
    is_reciprocal: bool
    is_cml: bool
    is_cmf: bool
    window_results: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    windows_consistent: bool = True
    tolerance: float = CLASSIFY_TOL

    def to_json(self) -> dict:
        return {
            "is_markov": self.is_markov,
            "is_reciprocal": self.is_reciprocal,
            "is_cml": self.is_cml,
            "is_cmf": self.is_cmf,
            "windows": [{"k1": k1, "direction": c, "holds": ok} for k1, c, ok in self.window_results],
            "windows_consistent": self.windows_consistent,
            "tolerance": self.tolerance,
            "residuals": dict(self.residuals),
        }


def classify_sequence(C: BlockMatrix, tol: float = CLASSIFY_TOL) -> SequenceClassification:
    """Classify a Gaussian sequence from its joint covariance.

    Inverts ``C`` and reads the block pattern of the precision; the ``[k1, N]``
    CM_F windows are swept for ``k1 in [1, N-3]`` (shorter windows are
    trivially CM_F).
    """
    J = precision_of(_as_cov(C))
    report = structure_classify(J, tol)
    residuals = {f"precision.{k}": v for k, v in report.residuals.items()}
    windows = []
    N = J.n_blocks - 1
    for k1 in range(1, N - 2):
        w = structure_classify(schur_window(J, k1, N), tol)
        windows.append((k1, "F", w.is_cmf_form))
        residuals[f"window[{k1},{N}].cmf"] = w.residuals["cmf"]
    via_windows = report.is_cml_form and report.is_cmf_form and all(ok for _, _, ok in windows)
    return SequenceClassification(
        is_markov=report.is_tridiagonal,
        is_reciprocal=report.is_cyclic_tridiagonal,
        is_cml=report.is_cml_form,
        is_cmf=report.is_cmf_form,
        window_results=windows,
        residuals=residuals,
        windows_consistent=report.is_cyclic_tridiagonal == via_windows,
        tolerance=tol,
    )


def conditional_cross_covariance(C: BlockMatrix, inside, outside, given) -> np.ndarray:
    """``Cov(x_inside, x_outside | x_given)`` by Schur complement on ``C``."""
    inside, outside, given = (sorted(set(s)) for s in (inside, outside, given))
    sets = (inside, outside, given)
    for a, b in combinations(sets, 2):
        common = set(a) & set(b)
        if common:
            raise IndexOverlap(f"index sets share {sorted(common)}")
    n = C.n_blocks
    for s in sets:
        if any(not 0 <= i < n for i in s):
            raise IndexOutOfRange(f"index outside [0, {n - 1}] in {s}")
    cross = C.submatrix(inside, outside)
    if given and inside and outside:
        f = factor_pd(C.submatrix(given), "conditioning covariance")
        cross = cross - C.submatrix(inside, given) @ f.solve(C.submatrix(given, outside))
    return cross


def conditional_independence_oracle(
    C: BlockMatrix, inside, outside, given, tol: float = CLASSIFY_TOL
) -> bool:
    """True iff ``x_inside`` and ``x_outside`` are independent given ``x_given``.

    Every entry of the conditional cross covariance must be at most
    ``tol * (1 + max|C|)``.
    """
    factor_pd(_as_cov(C), "covariance")
    cross = conditional_cross_covariance(C, inside, outside, given)
    return float(np.max(np.abs(cross), initial=0.0)) <= tol * (1.0 + C.max_abs())


def markov_patterns(N: int):
    for j in range(1, N):
        yield list(range(j + 1, N + 1)), list(range(0, j)), [j]


def reciprocal_patterns(N: int):
    for j in range(0, N + 1):
        for l in range(j + 2, N + 1):
            outside = list(range(0, j)) + list(range(l + 1, N + 1))
            if outside:
                yield list(range(j + 1, l)), outside, [j, l]


def cm_patterns(k1: int, k2: int, direction: str):
    """Patterns of ``[k1, k2]``-CM_c: given ``x_c`` the window is Markov."""
    if direction == "L":
        for j in range(k1 + 1, k2 - 1):
            yield list(range(j + 1, k2)), list(range(k1, j)), [j, k2]
    else:
        for j in range(k1 + 2, k2):
            yield list(range(j + 1, k2 + 1)), list(range(k1 + 1, j)), [j, k1]


def classify_by_oracle(C: BlockMatrix, tol: float = CLASSIFY_TOL) -> dict:
    """Class flags from exhaustive conditional-independence checks (small ``N`` only)."""
    factor_pd(_as_cov(C), "covariance")
    N = C.n_blocks - 1

    def all_hold(patterns):
        return all(conditional_independence_oracle(C, a, b, g, tol) for a, b, g in patterns)

    return {
        "is_markov": all_hold(markov_patterns(N)),
        "is_reciprocal": all_hold(reciprocal_patterns(N)),
        "is_cml": all_hold(cm_patterns(0, N, "L")),
        "is_cmf": all_hold(cm_patterns(0, N, "F")),
        "windows": [(k1, "F", all_hold(cm_patterns(k1, N, "F"))) for k1 in range(1, N - 2)],
    }


# --- covariance split and model fitting ----------------------------------------

def split_components(r: Representation):
    """``(B, Gamma)`` of the split ``C = B + Gamma D Gamma'`` for a representation."""
    validate_representation(r)
    N, d = r.N, r.d
    inner = markov_joint_covariance(r.underlying).data
    B = np.zeros(((N + 1) * d, (N + 1) * d))
    gamma = np.zeros(((N + 1) * d, d))
    offset = 0 if r.direction == "L" else d
    B[offset:offset + N * d, offset:offset + N * d] = inner
    for k in range(N + 1):
        gamma[k * d:(k + 1) * d] = np.eye(d) if k == (N if r.direction == "L" else 0) else r.Gamma(k)
    return B, gamma


def covariance_split_residual(C: BlockMatrix, r: Representation) -> float:
    """``max|C - (B + Gamma D Gamma')| / (1 + max|C|)``."""
    B, gamma = split_components(r)
    if C.data.shape != B.shape:
        raise DimensionMismatch(f"covariance has shape {C.data.shape}, representation implies {B.shape}")
    diff = C.data - (B + gamma @ r.endpoint_cov @ gamma.T)
    return float(np.max(np.abs(diff))) / (1.0 + C.max_abs())


def verify_covariance_split(C: BlockMatrix, r: Representation, tol: float = SPLIT_TOL) -> bool:
    return covariance_split_residual(C, r) <= tol


def _regress(C: BlockMatrix, k: int, parents: list[int]):
    """Gains and residual covariance of ``x_k`` regressed on ``x_parents``."""
    ckk = C.block(k, k)
    if not parents:
        return [], ckk
    f = factor_pd(C.submatrix(parents), "regressor covariance")
    cross = C.submatrix([k], parents)
    gains = f.solve(cross.T).T
    resid = ckk - gains @ cross.T
    d = C.block_dim
    return [gains[:, i * d:(i + 1) * d] for i in range(len(parents))], 0.5 * (resid + resid.T)


def model_from_covariance(C: BlockMatrix, direction: str) -> CMcModel:
    """CM_c model whose equations are the Gaussian regressions of each state on its parents.

    The model reproduces ``C`` exactly iff ``C`` is CM_c in that direction.
    """
    C = _as_cov(C)
    factor_pd(C, "covariance")
    N, d = C.n_blocks - 1, C.block_dim
    if N < 2:
        raise IndexOutOfRange(f"need N >= 2, got {N}")
    trans, coup, noise = {}, {}, {}
    if direction == "L":
        (g0N,), G0 = _regress(C, 0, [N])
        for k in range(1, N):
            (trans[k], coup[k]), noise[k] = _regress(C, k, [k - 1, N])
        boundary = Boundary(C.block(N, N), g0N, G0)
        return CMcModel("L", N, d, trans, coup, noise, boundary)
    if direction == "F":
        (h,), noise[1] = _regress(C, 1, [0])
        for k in range(2, N + 1):
            (trans[k], coup[k]), noise[k] = _regress(C, k, [k - 1, 0])
        return CMcModel("F", N, d, trans, coup, noise, Boundary(C.block(0, 0)), first_step=h)
    raise ValueError(f"direction must be 'L' or 'F', got {direction!r}")
