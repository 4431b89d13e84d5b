"""Conversions between Markov, reciprocal CM_L and CM_c models.

* Markov model -> induced (always reciprocal) CM_L interior, and back through
  the precision ladder once a Markov-making boundary is chosen.
* CM_c model <-> unique representation ``x_k = y_k + Gamma_k x_c`` with ``y``
  an underlying Markov sequence uncorrelated with the endpoint ``x_c``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .blockmat import DEFAULT_TOL, factor_pd, pd_inverse
from .errors import BoundaryNotMarkov, IncompleteParameters, NotReciprocal
from .models import (
    Boundary,
    CMcModel,
    ConditionResult,
    MarkovModel,
    _block,
    _blocks,
    _compare,
    _merge,
    boundary_from_endpoint_joint,
    check_reciprocal_condition,
    ensure_valid,
    validate,
)


@dataclass(frozen=True)
class HorizonAggregates:
    """Products and accumulated noise from time ``k`` to the horizon ``N``.

    ``m_horizon[k] = M_{N,N-1} ... M_{k+1,k}`` (identity at ``k = N``) and
    ``c_horizon[k] = sum_{n=k}^{N-1} m_horizon[n+1] M_{n+1} m_horizon[n+1]'``,
    the covariance of ``y_N`` given ``y_k``.
    """

    m_horizon: Mapping[int, np.ndarray]
    c_horizon: Mapping[int, np.ndarray]


def horizon_aggregates(m: MarkovModel) -> HorizonAggregates:
    N, d = m.N, m.d
    m_h = {N: np.eye(d)}
    for k in range(N - 1, -1, -1):
        m_h[k] = m_h[k + 1] @ m.A(k + 1)
    c_h = {N - 1: m.M(N).copy()}
    for k in range(N - 2, -1, -1):
        c_h[k] = c_h[k + 1] + m_h[k + 1] @ m.M(k + 1) @ m_h[k + 1].T
    return HorizonAggregates(m_h, c_h)


def _induced_step(m: MarkovModel, agg: HorizonAggregates, k: int):
    """``(G_k, G_k M_{N|k}' C_{N|k}^{-1})`` for one interior time."""
    mh = agg.m_horizon[k]
    ch = factor_pd(agg.c_horizon[k], f"C_{{N|{k}}}")
    info = pd_inverse(m.M(k), f"M_{k}") + mh.T @ ch.solve(mh)
    Gk = pd_inverse(info, f"G_{k}^{{-1}}")
    return Gk, Gk @ ch.solve(mh).T


def induce_cml_from_markov(m: MarkovModel) -> CMcModel:
    """Interior of the CM_L model induced by a Markov model (no boundary).

    For ``k in [1, N-1]``::

        G_k      = (M_k^{-1} + M_{N|k}' C_{N|k}^{-1} M_{N|k})^{-1}
        G_{k,N}  = G_k M_{N|k}' C_{N|k}^{-1}
        G_{k,k-1} = M_{k,k-1} - G_{k,N} M_{N|k} M_{k,k-1}

    These are the moments of ``p(y_k | y_{k-1}, y_N)``; the result always
    satisfies the reciprocity identity.
    """
    ensure_valid(m)
    agg = horizon_aggregates(m)
    transition, coupling, noise = {}, {}, {}
    for k in range(1, m.N):
        Gk, GkN = _induced_step(m, agg, k)
        noise[k] = 0.5 * (Gk + Gk.T)
        coupling[k] = GkN
        transition[k] = m.A(k) - GkN @ agg.m_horizon[k] @ m.A(k)
    return CMcModel("L", m.N, m.d, transition, coupling, noise)


def _markov_endpoint_moments(m: MarkovModel):
    C = m.M(0).copy()
    for k in range(1, m.N + 1):
        C = m.A(k) @ C @ m.A(k).T + m.M(k)
    m_h = np.eye(m.d)
    for k in range(m.N, 0, -1):
        m_h = m_h @ m.A(k)
    C0 = m.M(0)
    return C0, C, C0 @ m_h.T


def markov_matching_boundary(m: MarkovModel) -> Boundary:
    """Boundary under which the induced CM_L interior reproduces ``m`` itself.

    ``G_N = C_N``, ``G_{0,N} = C_{0,N} C_N^{-1}``,
    ``G_0 = C_0 - C_{0,N} C_N^{-1} C_{N,0}`` from the Markov joint moments.
    """
    ensure_valid(m)
    C0, CN, C0N = _markov_endpoint_moments(m)
    return boundary_from_endpoint_joint(C0, CN, C0N)


def cml_precision_blocks(m: CMcModel):
    """Diagonal ``A_k`` and super-diagonal ``B_k`` blocks of a CM_L precision.

    Returns ``(A, B)`` with ``A[k]`` for ``k in [0, N]`` and ``B[k]`` (the
    ``(k, k+1)`` block) for ``k in [0, N-1]``.
    """
    N = m.N
    Ginv = {k: pd_inverse(m.G(k), f"G_{k}") for k in range(0, N + 1)}
    A, B = {}, {}
    A[0] = Ginv[0] + m.A(1).T @ Ginv[1] @ m.A(1)
    for k in range(1, N - 1):
        A[k] = Ginv[k] + m.A(k + 1).T @ Ginv[k + 1] @ m.A(k + 1)
    A[N - 1] = Ginv[N - 1]
    A[N] = Ginv[N] + sum(m.coupling_at(k).T @ Ginv[k] @ m.coupling_at(k) for k in range(0, N))
    for k in range(0, N - 1):
        B[k] = -m.A(k + 1).T @ Ginv[k + 1]
    B[N - 1] = -Ginv[N - 1] @ m.coupling_at(N - 1)
    return A, B


def boundary_markov_residual(m: CMcModel, tol: float = DEFAULT_TOL) -> ConditionResult:
    """Compare ``G_{0,N}`` with ``G_0 G_{1,0}' G_1^{-1} G_{1,N}`` (D_0 = 0)."""
    b = m.require_boundary()
    target = b.other_end_cov @ m.A(1).T @ factor_pd(m.G(1), "G_1").solve(m.coupling_at(1))
    return _compare({"boundary": (b.cross_gain, target)}, tol)


def recover_markov_from_reciprocal_cml(m: CMcModel, tol: float = DEFAULT_TOL) -> MarkovModel:
    """Markov model generating the same law as a reciprocal CM_L model with a
    Markov-making boundary.

    The precision blocks ``A_k, B_k`` of the CM_L model are matched with those
    of a Markov model by the backward ladder::

        M_N^{-1} = A_N,              M_{N,N-1} = -M_N B_{N-1}'
        M_{k+1}^{-1} = A_{k+1} - M_{k+2,k+1}' M_{k+2}^{-1} M_{k+2,k+1}
        M_{k+1,k} = -M_{k+1} B_k'                         k = N-2, ..., 0
        M_0^{-1} = A_0 - M_{1,0}' M_1^{-1} M_{1,0}
    """
    if m.direction != "L":
        raise ValueError("recovery is defined for CM_L models")
    ensure_valid(m)
    m.require_boundary()
    rec = check_reciprocal_condition(m, tol)
    if not rec:
        raise NotReciprocal(f"reciprocity identity fails (max relative residual {rec.max_relative:.3e})")
    bnd = boundary_markov_residual(m, 10 * tol)
    if not bnd:
        raise BoundaryNotMarkov(
            f"boundary does not make D_0 vanish (residual {bnd.residuals['boundary']:.3e})"
        )
    N = m.N
    A, B = cml_precision_blocks(m)
    Minv, trans = {}, {}
    Minv[N] = A[N]
    M = {N: pd_inverse(Minv[N], f"M_{N}^{{-1}}")}
    trans[N] = -M[N] @ B[N - 1].T
    for k in range(N - 2, -1, -1):
        Minv[k + 1] = A[k + 1] - trans[k + 2].T @ Minv[k + 2] @ trans[k + 2]
        M[k + 1] = pd_inverse(0.5 * (Minv[k + 1] + Minv[k + 1].T), f"M_{k + 1}^{{-1}}")
        trans[k + 1] = -M[k + 1] @ B[k].T
    Minv[0] = A[0] - trans[1].T @ Minv[1] @ trans[1]
    M[0] = pd_inverse(0.5 * (Minv[0] + Minv[0].T), "M_0^{-1}")
    return MarkovModel(N, m.d, trans, M)


def underlying_markov_of_induced(m: MarkovModel, initial_cov=None) -> MarkovModel:
    """Underlying Markov model (over ``[0, N-1]``) of the CM_L model induced by ``m``.

    ``U_k = (M_k^{-1} + M_{N|k}' C_{N|k}^{-1} M_{N|k})^{-1}`` and
    ``U_{k,k-1} = M_{k,k-1} - U_k M_{N|k}' C_{N|k}^{-1} M_{N|k-1}``,
    ``k in [1, N-1]``.  ``U_0`` belongs to the boundary, not to the induced
    interior; it is included only when ``initial_cov`` is given.
    """
    ensure_valid(m)
    agg = horizon_aggregates(m)
    trans, noise = {}, {}
    for k in range(1, m.N):
        Uk, gain = _induced_step(m, agg, k)
        noise[k] = 0.5 * (Uk + Uk.T)
        trans[k] = m.A(k) - gain @ agg.m_horizon[k - 1]
    if initial_cov is not None:
        noise[0] = initial_cov
    return MarkovModel(m.N - 1, m.d, trans, noise)


# --- Markov-plus-endpoint representation --------------------------------------

@dataclass(frozen=True)
class Representation:
    """``x_k = y_k + Gamma_k x_c`` for ``k != c``, ``y`` Markov and uncorrelated with ``x_c``.

    ``underlying`` is a :class:`MarkovModel` with local time ``j``: ``j = k``
    for CM_L (times ``[0, N-1]``) and ``j = k - 1`` for CM_F (times ``[1, N]``).
    ``gamma`` is keyed by the original time index ``k``.  ``endpoint_cov`` is
    ``D = Cov(x_c)``.
    """

    direction: str
    underlying: MarkovModel
    gamma: Mapping[int, np.ndarray]
    endpoint_cov: np.ndarray

    def __post_init__(self):
        if self.direction not in ("L", "F"):
            raise ValueError(f"direction must be 'L' or 'F', got {self.direction!r}")
        object.__setattr__(self, "gamma", _blocks(self.gamma))
        object.__setattr__(self, "endpoint_cov", _block(self.endpoint_cov))

    @property
    def N(self) -> int:
        return self.underlying.N + 1

    @property
    def d(self) -> int:
        return self.underlying.d

    @property
    def times(self) -> range:
        """Original time indices covered by the underlying Markov sequence."""
        return range(0, self.N) if self.direction == "L" else range(1, self.N + 1)

    def _local(self, k: int) -> int:
        return k if self.direction == "L" else k - 1

    def U(self, k: int) -> np.ndarray:
        """Underlying noise covariance at original time ``k``."""
        return self.underlying.M(self._local(k))

    def U_trans(self, k: int) -> np.ndarray:
        """Underlying transition ``U_{k,k-1}`` at original time ``k``."""
        return self.underlying.A(self._local(k))

    def Gamma(self, k: int) -> np.ndarray:
        try:
            return self.gamma[k]
        except KeyError:
            raise IncompleteParameters(f"missing gamma[{k}]") from None


def validate_representation(r: Representation):
    report = validate(r.underlying, min_horizon=1)
    report.raise_if_invalid()
    factor_pd(r.endpoint_cov, "endpoint_cov")
    for k in r.times:
        g = r.Gamma(k)
        if g.shape != (r.d, r.d):
            from .errors import DimensionMismatch

            raise DimensionMismatch(f"gamma[{k}] has shape {g.shape}")
    return r


def decompose_to_representation(m: CMcModel) -> Representation:
    """Unique Markov-plus-endpoint representation of a CM_c model.

    CM_L: ``D = G_N``, ``Gamma_0 = G_{0,N}``, ``U_k = G_k``,
    ``U_{k,k-1} = G_{k,k-1}``, ``Gamma_k = G_{k,k-1} Gamma_{k-1} + G_{k,N}``.
    CM_F: ``D = G_0``, ``Gamma_1 = H`` (twice each of the two equal halves of
    the first-step coefficient), then the same recursion for ``k in [2, N]``.
    """
    ensure_valid(m)
    b = m.require_boundary()
    N = m.N
    if m.direction == "L":
        gamma = {0: b.cross_gain}
        for k in range(1, N):
            gamma[k] = m.A(k) @ gamma[k - 1] + m.coupling_at(k)
        trans = {k: m.A(k) for k in range(1, N)}
        noise = {k: m.G(k) for k in range(0, N)}
    else:
        gamma = {1: m.first_step}
        for k in range(2, N + 1):
            gamma[k] = m.A(k) @ gamma[k - 1] + m.coupling_at(k)
        trans = {k - 1: m.A(k) for k in range(2, N + 1)}
        noise = {k - 1: m.G(k) for k in range(1, N + 1)}
    underlying = MarkovModel(N - 1, m.d, trans, noise)
    return Representation(m.direction, underlying, gamma, b.endpoint_cov)


def construct_from_representation(r: Representation) -> CMcModel:
    """CM_c model of ``x_k = y_k + Gamma_k x_c``.

    ``G_{k,k-1} = U_{k,k-1}``, ``G_{k,c} = Gamma_k - U_{k,k-1} Gamma_{k-1}``,
    ``G_k = U_k``; the CM_F first-step coefficient is ``Gamma_1``.
    """
    validate_representation(r)
    N = r.N
    inner = range(1, N) if r.direction == "L" else range(2, N + 1)
    transition = {k: r.U_trans(k) for k in inner}
    coupling = {k: r.Gamma(k) - r.U_trans(k) @ r.Gamma(k - 1) for k in inner}
    if r.direction == "L":
        noise = {k: r.U(k) for k in inner}
        boundary = Boundary(r.endpoint_cov, r.Gamma(0), r.U(0))
        return CMcModel("L", N, r.d, transition, coupling, noise, boundary)
    noise = {k: r.U(k) for k in range(1, N + 1)}
    return CMcModel("F", N, r.d, transition, coupling, noise, Boundary(r.endpoint_cov),
                    first_step=r.Gamma(1))


def first_step_halves(m: CMcModel):
    """Equal split of the CM_F first-step coefficient into transition and coupling parts."""
    if m.direction != "F":
        raise ValueError("only CM_F models have a first-step coefficient")
    half = 0.5 * m.first_step
    return half, half.copy()


def representation_conditions(r: Representation, tol: float = DEFAULT_TOL):
    """``(reciprocal, markov_extra)`` condition results for a representation.

    Reciprocal iff, for ``k in [1, N-1]`` minus ``N-1`` (CM_L) or ``1`` (CM_F)::

        U_k^{-1}(Gamma_k - U_{k,k-1} Gamma_{k-1})
            = U_{k+1,k}' U_{k+1}^{-1}(Gamma_{k+1} - U_{k+1,k} Gamma_k)

    Markov iff additionally ``U_0^{-1} Gamma_0 = U_{1,0}' U_1^{-1}(Gamma_1 - U_{1,0} Gamma_0)``
    (CM_L) or ``Gamma_N = U_{N,N-1} Gamma_{N-1}`` (CM_F).
    """
    validate_representation(r)
    N = r.N
    G = r.Gamma

    def weight(k):
        return G(k) - r.U_trans(k) @ G(k - 1)

    ks = range(1, N - 1) if r.direction == "L" else range(2, N)
    pairs = {}
    for k in ks:
        lhs = factor_pd(r.U(k), f"U_{k}").solve(weight(k))
        rhs = r.U_trans(k + 1).T @ factor_pd(r.U(k + 1), f"U_{k + 1}").solve(weight(k + 1))
        pairs[k] = (lhs, rhs)
    reciprocal = _compare(pairs, tol)
    if r.direction == "L":
        lhs = factor_pd(r.U(0), "U_0").solve(G(0))
        rhs = r.U_trans(1).T @ factor_pd(r.U(1), "U_1").solve(weight(1))
        extra = _compare({"boundary": (lhs, rhs)}, tol)
    else:
        w = weight(N)
        extra = _compare({"terminal": (w, np.zeros_like(w))}, tol)
    return reciprocal, extra


def classify_representation(r: Representation, tol: float = DEFAULT_TOL) -> str:
    """``"markov"``, ``"reciprocal"`` or ``"general_cm"``."""
    reciprocal, extra = representation_conditions(r, tol)
    if not reciprocal:
        return "general_cm"
    return "markov" if extra else "reciprocal"


def representation_result(r: Representation, tol: float = DEFAULT_TOL) -> ConditionResult:
    """Merged residuals of :func:`representation_conditions` (all must hold for Markov)."""
    return _merge(*representation_conditions(r, tol))


def destination_directed_model(motion: MarkovModel, cov_x0, cov_xN, cross) -> CMcModel:
    """Induced CM_L interior of ``motion`` with a boundary matching a chosen
    origin/destination joint law."""
    return induce_cml_from_markov(motion).with_boundary(
        boundary_from_endpoint_joint(cov_x0, cov_xN, cross)
    )
