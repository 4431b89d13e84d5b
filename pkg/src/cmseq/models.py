"""Parameter objects for Markov, CM_L/CM_F and waypoint (CM_L with a [0,k2]-CM_L
window) dynamic models, with validation and the parameter-level class tests.

Models (all noises zero-mean, white, Gaussian with the listed covariances):

Markov::

    y_0 = e_0                              Cov e_0 = M_0
    y_k = M_{k,k-1} y_{k-1} + e_k          k in [1, N]

CM_L (conditioning on the last state)::

    x_N = e_N,   x_0 = G_{0,N} x_N + e_0
    x_k = G_{k,k-1} x_{k-1} + G_{k,N} x_N + e_k      k in [1, N-1]

CM_F (conditioning on the first state)::

    x_0 = e_0,   x_1 = H x_0 + e_1
    x_k = G_{k,k-1} x_{k-1} + G_{k,0} x_0 + e_k      k in [2, N]

For CM_F the transition and coupling terms of ``x_1`` both multiply ``x_0``;
only their sum ``H`` (``first_step``) is identifiable, so that is what is stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import errors
from .blockmat import DEFAULT_TOL, factor_pd, pd_inverse
from .errors import DimensionMismatch, IncompleteParameters, IndexOutOfRange


def _block(value) -> np.ndarray:
    arr = np.atleast_2d(np.array(value, dtype=float))
    arr.setflags(write=False)
    return arr


def _blocks(mapping) -> dict[int, np.ndarray]:
    return {int(k): _block(v) for k, v in dict(mapping).items()}


def _get(mapping: Mapping[int, np.ndarray], k: int, name: str) -> np.ndarray:
    try:
        return mapping[k]
    except KeyError:
        raise IncompleteParameters(f"missing {name}[{k}]") from None


@dataclass(frozen=True)
class MarkovModel:
    """First-order Gauss-Markov model over ``[0, N]``.

    ``transition[k]`` is ``M_{k,k-1}`` for ``k in [1, N]``; ``noise_cov[k]`` is
    ``M_k`` for ``k in [0, N]`` (``M_0`` is the covariance of ``y_0``).
    """

    N: int
    d: int
    transition: Mapping[int, np.ndarray]
    noise_cov: Mapping[int, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "transition", _blocks(self.transition))
        object.__setattr__(self, "noise_cov", _blocks(self.noise_cov))

    def M(self, k: int) -> np.ndarray:
        return _get(self.noise_cov, k, "noise_cov")

    def A(self, k: int) -> np.ndarray:
        return _get(self.transition, k, "transition")


@dataclass(frozen=True)
class Boundary:
    """CM_L boundary ``x_N = e_N``, ``x_0 = G_{0,N} x_N + e_0``; CM_F uses ``x_0 = e_0``.

    ``endpoint_cov`` is the covariance of the conditioning state (``G_N`` for
    CM_L, ``G_0`` for CM_F).  ``cross_gain`` (``G_{0,N}``) and
    ``other_end_cov`` (``G_0``) exist only for CM_L.
    """

    endpoint_cov: np.ndarray
    cross_gain: Optional[np.ndarray] = None
    other_end_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "endpoint_cov", _block(self.endpoint_cov))
        for name in ("cross_gain", "other_end_cov"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _block(value))


@dataclass(frozen=True)
class InitialFormBoundary:
    """The equivalent CM_L boundary ``x_0 = w_0``, ``x_N = G_{N,0} x_0 + w_N``.

    The noises ``w_0, w_N`` differ from the ``e_0, e_N`` of :class:`Boundary`;
    only the joint law of ``(x_0, x_N)`` is shared.
    """

    initial_cov: np.ndarray
    terminal_gain: np.ndarray
    terminal_cov: np.ndarray


@dataclass(frozen=True)
class CMcModel:
    """CM_L (``direction="L"``) or CM_F (``direction="F"``) dynamic model.

    Index ranges:

    ====================  ============  ============
    field                 L             F
    ====================  ============  ============
    transition            [1, N-1]      [2, N]
    coupling              [1, N-1]      [2, N]
    noise_cov             [1, N-1]      [1, N]
    first_step            --            ``H``
    ====================  ============  ============

    ``boundary`` may be None for an interior-only model (as produced by
    :func:`cmseq.transforms.induce_cml_from_markov`).
    """

    direction: str
    N: int
    d: int
    transition: Mapping[int, np.ndarray]
    coupling: Mapping[int, np.ndarray]
    noise_cov: Mapping[int, np.ndarray]
    boundary: Optional[Boundary] = None
    first_step: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.direction not in ("L", "F"):
            raise ValueError(f"direction must be 'L' or 'F', got {self.direction!r}")
        for name in ("transition", "coupling", "noise_cov"):
            object.__setattr__(self, name, _blocks(getattr(self, name)))
        if self.first_step is not None:
            object.__setattr__(self, "first_step", _block(self.first_step))

    @property
    def c(self) -> int:
        """Index of the conditioning state."""
        return self.N if self.direction == "L" else 0

    @property
    def interior(self) -> range:
        return range(1, self.N) if self.direction == "L" else range(2, self.N + 1)

    def G(self, k: int) -> np.ndarray:
        """Noise covariance at time ``k`` including the boundary ones."""
        if k == self.c or (self.direction == "L" and k == 0):
            b = self.require_boundary()
            if k == self.c:
                return b.endpoint_cov
            return _require(b.other_end_cov, "boundary.other_end_cov")
        return _get(self.noise_cov, k, "noise_cov")

    def A(self, k: int) -> np.ndarray:
        return _get(self.transition, k, "transition")

    def coupling_at(self, k: int) -> np.ndarray:
        """``G_{k,c}``; for CM_L ``k = 0`` this is the boundary cross gain."""
        if self.direction == "L" and k == 0:
            return _require(self.require_boundary().cross_gain, "boundary.cross_gain")
        return _get(self.coupling, k, "coupling")

    def require_boundary(self) -> Boundary:
        if self.boundary is None:
            raise IncompleteParameters("model has no boundary condition")
        return self.boundary

    def with_boundary(self, boundary: Optional[Boundary]) -> "CMcModel":
        return CMcModel(
            self.direction, self.N, self.d, self.transition, self.coupling,
            self.noise_cov, boundary, self.first_step,
        )

    def replace(self, **changes) -> "CMcModel":
        fields = dict(
            direction=self.direction, N=self.N, d=self.d, transition=self.transition,
            coupling=self.coupling, noise_cov=self.noise_cov, boundary=self.boundary,
            first_step=self.first_step,
        )
        fields.update(changes)
        return CMcModel(**fields)


def _require(value, name):
    if value is None:
        raise IncompleteParameters(f"missing {name}")
    return value


@dataclass(frozen=True)
class CML0k2Model:
    """Waypoint model: ``[0, k2]``-CM_L by construction, and also CM_L over
    ``[0, N]`` exactly when :func:`check_intersection_conditions` holds.

    ::

        x_{k2} = e_{k2},   x_0 = G_{0,k2} x_{k2} + e_0
        x_k = G_{k,k-1} x_{k-1} + G_{k,k2} x_{k2} + e_k       k in [1, k2-1]
        x_N = sum_{i=0..k2} G_{N,i} x_i + e_N
        x_k = G_{k,k-1} x_{k-1} + G_{k,N} x_N + e_k           k in [k2+1, N-1]

    ``waypoint_coupling[k]`` is ``G_{k,k2}`` for ``k in [0, k2-1]`` (``k = 0``
    is the boundary gain), ``terminal_gain[i]`` is ``G_{N,i}``,
    ``terminal_coupling[k]`` is ``G_{k,N}`` and ``noise_cov[k]`` is ``G_k``
    for every ``k in [0, N]``.
    """

    N: int
    d: int
    k2: int
    transition: Mapping[int, np.ndarray]
    waypoint_coupling: Mapping[int, np.ndarray]
    terminal_gain: Mapping[int, np.ndarray]
    terminal_coupling: Mapping[int, np.ndarray]
    noise_cov: Mapping[int, np.ndarray]

    def __post_init__(self):
        for name in ("transition", "waypoint_coupling", "terminal_gain",
                     "terminal_coupling", "noise_cov"):
            object.__setattr__(self, name, _blocks(getattr(self, name)))

    def G(self, k: int) -> np.ndarray:
        return _get(self.noise_cov, k, "noise_cov")

    def A(self, k: int) -> np.ndarray:
        return _get(self.transition, k, "transition")

    def replace(self, **changes) -> "CML0k2Model":
        fields = {name: getattr(self, name) for name in (
            "N", "d", "k2", "transition", "waypoint_coupling", "terminal_gain",
            "terminal_coupling", "noise_cov")}
        fields.update(changes)
        return CML0k2Model(**fields)


# --- index ranges -------------------------------------------------------------

def parameter_ranges(model) -> dict[str, list[int]]:
    """Expected time indices of every block-valued parameter field of ``model``."""
    N = model.N
    if isinstance(model, MarkovModel):
        return {"transition": list(range(1, N + 1)), "noise_cov": list(range(0, N + 1))}
    if isinstance(model, CMcModel):
        if model.direction == "L":
            inner = list(range(1, N))
            return {"transition": inner, "coupling": inner, "noise_cov": inner}
        inner = list(range(2, N + 1))
        return {"transition": inner, "coupling": inner, "noise_cov": list(range(1, N + 1))}
    if isinstance(model, CML0k2Model):
        k2 = model.k2
        return {
            "transition": list(range(1, k2)) + list(range(k2 + 1, N)),
            "waypoint_coupling": list(range(0, k2)),
            "terminal_gain": list(range(0, k2 + 1)),
            "terminal_coupling": list(range(k2 + 1, N)),
            "noise_cov": list(range(0, N + 1)),
        }
    raise TypeError(f"not a model: {type(model).__name__}")


_COV_FIELDS = {"noise_cov"}


# --- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Issue:
    code: str
    where: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple = ()

    @property
    def valid(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return self.valid

    def raise_if_invalid(self):
        if self.issues:
            first = self.issues[0]
            exc = getattr(errors, first.code, errors.CMSeqError)
            raise exc(f"{first.where}: {first.message}")

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "issues": [{"code": i.code, "where": i.where, "message": i.message}
                       for i in self.issues],
        }


def _check_block(issues, where, block, d, cov):
    if block.shape != (d, d):
        issues.append(Issue("DimensionMismatch", where, f"shape {block.shape}, expected ({d}, {d})"))
        return
    if not np.all(np.isfinite(block)):
        issues.append(Issue("NotPositiveDefinite" if cov else "DimensionMismatch",
                            where, "non-finite entries"))
        return
    if cov:
        try:
            factor_pd(block, where)
        except errors.CMSeqError as exc:
            issues.append(Issue("NotPositiveDefinite", where, str(exc)))


def _check_mapping(issues, name, mapping, expected, d, cov):
    expected_set = set(expected)
    for k in expected:
        if k not in mapping:
            issues.append(Issue("IncompleteParameters", f"{name}[{k}]", "missing block"))
        else:
            _check_block(issues, f"{name}[{k}]", mapping[k], d, cov)
    for k in sorted(set(mapping) - expected_set):
        issues.append(Issue("IndexOutOfRange", f"{name}[{k}]", "index outside the model's range"))


def validate(model, min_horizon: int = 2) -> ValidationReport:
    """Check dimensions, index completeness and positive definiteness of ``model``.

    Never raises for a malformed model; every failure becomes an :class:`Issue`.
    ``min_horizon`` is the smallest allowed ``N`` for Markov models (the
    underlying model of a representation may be shorter than 2).
    """
    issues: list[Issue] = []
    d = model.d
    if d < 1:
        return ValidationReport((Issue("DimensionMismatch", "d", f"d={d} must be >= 1"),))
    if isinstance(model, MarkovModel):
        if model.N < min_horizon:
            issues.append(Issue("IndexOutOfRange", "N", f"N={model.N} must be >= {min_horizon}"))
    elif isinstance(model, CMcModel):
        if model.N < 2:
            issues.append(Issue("IndexOutOfRange", "N", f"N={model.N} must be >= 2"))
    elif isinstance(model, CML0k2Model):
        if not 2 <= model.k2 <= model.N - 2:
            issues.append(Issue("IndexOutOfRange", "k2",
                                f"k2={model.k2} must lie in [2, N-2] with N={model.N}"))
    if issues:
        return ValidationReport(tuple(issues))

    for name, expected in parameter_ranges(model).items():
        _check_mapping(issues, name, getattr(model, name), expected, d, name in _COV_FIELDS)

    if isinstance(model, CMcModel):
        if model.direction == "F":
            if model.first_step is None:
                issues.append(Issue("IncompleteParameters", "first_step", "missing block"))
            else:
                _check_block(issues, "first_step", model.first_step, d, cov=False)
        elif model.first_step is not None:
            issues.append(Issue("IndexOutOfRange", "first_step", "only CM_F models have first_step"))
        b = model.boundary
        if b is not None:
            _check_block(issues, "boundary.endpoint_cov", b.endpoint_cov, d, cov=True)
            if model.direction == "L":
                for name, cov in (("cross_gain", False), ("other_end_cov", True)):
                    value = getattr(b, name)
                    if value is None:
                        issues.append(Issue("IncompleteParameters", f"boundary.{name}", "missing block"))
                    else:
                        _check_block(issues, f"boundary.{name}", value, d, cov)
    return ValidationReport(tuple(issues))


def ensure_valid(model, min_horizon: int = 2):
    validate(model, min_horizon).raise_if_invalid()
    return model


# --- parameter-level class conditions -----------------------------------------

@dataclass(frozen=True)
class ConditionResult:
    """Outcome of a parameter identity check.

    ``residuals[key]`` is ``max|lhs - rhs|``; ``relative[key]`` divides it by
    ``1 + max(max|lhs|, max|rhs|)``.  The identity holds when every relative
    residual is at most ``tol``.
    """

    holds: bool
    residuals: dict = field(default_factory=dict)
    relative: dict = field(default_factory=dict)
    tol: float = DEFAULT_TOL

    def __bool__(self) -> bool:
        return self.holds

    @property
    def max_relative(self) -> float:
        return max(self.relative.values(), default=0.0)

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "residuals": {str(k): v for k, v in self.residuals.items()},
            "max_relative": self.max_relative,
        }


def _compare(pairs, tol: float) -> ConditionResult:
    residuals, relative = {}, {}
    for key, (lhs, rhs) in pairs.items():
        diff = float(np.max(np.abs(lhs - rhs), initial=0.0))
        scale = 1.0 + max(float(np.max(np.abs(lhs), initial=0.0)),
                          float(np.max(np.abs(rhs), initial=0.0)))
        residuals[key] = diff
        relative[key] = diff / scale
    return ConditionResult(all(r <= tol for r in relative.values()), residuals, relative, tol)


def _merge(*results: ConditionResult) -> ConditionResult:
    residuals, relative = {}, {}
    for r in results:
        residuals.update(r.residuals)
        relative.update(r.relative)
    return ConditionResult(all(r.holds for r in results), residuals, relative, results[0].tol)


def _reciprocal_pair(m: CMcModel, k: int):
    """Both sides of ``G_k^{-1} G_{k,c} = G_{k+1,k}' G_{k+1}^{-1} G_{k+1,c}``."""
    lhs = factor_pd(m.G(k), f"G_{k}").solve(m.coupling_at(k))
    rhs = m.A(k + 1).T @ factor_pd(m.G(k + 1), f"G_{k + 1}").solve(m.coupling_at(k + 1))
    return lhs, rhs


def _reciprocal_range(m: CMcModel) -> range:
    return range(1, m.N - 1) if m.direction == "L" else range(2, m.N)


def check_reciprocal_condition(m: CMcModel, tol: float = DEFAULT_TOL) -> ConditionResult:
    """Reciprocity of a CM_c model from its interior parameters."""
    return _compare({k: _reciprocal_pair(m, k) for k in _reciprocal_range(m)}, tol)


def check_markov_condition(m: CMcModel, tol: float = DEFAULT_TOL) -> ConditionResult:
    """Reciprocity plus the boundary identity that makes the sequence Markov.

    CM_L: ``G_0^{-1} G_{0,N} = G_{1,0}' G_1^{-1} G_{1,N}`` (needs a boundary).
    CM_F: ``G_{N,0} = 0``.
    """
    reciprocal = check_reciprocal_condition(m, tol)
    if m.direction == "L":
        b = m.require_boundary()
        G0 = _require(b.other_end_cov, "boundary.other_end_cov")
        lhs = factor_pd(G0, "G_0").solve(_require(b.cross_gain, "boundary.cross_gain"))
        rhs = m.A(1).T @ factor_pd(m.G(1), "G_1").solve(m.coupling_at(1))
        extra = _compare({"boundary": (lhs, rhs)}, tol)
    else:
        coupling = m.coupling_at(m.N)
        extra = _compare({"terminal": (coupling, np.zeros_like(coupling))}, tol)
    return _merge(reciprocal, extra)


def check_window_cmf_condition(m: CMcModel, k1: int, tol: float = DEFAULT_TOL) -> ConditionResult:
    """Parameter test for ``CM_L  and  [k1, N]-CM_F`` membership of a CM_L model."""
    if m.direction != "L":
        raise ValueError("window CM_F condition is defined for CM_L models")
    if not 0 <= k1 <= m.N:
        raise IndexOutOfRange(f"k1={k1} outside [0, {m.N}]")
    return _compare({k: _reciprocal_pair(m, k) for k in range(k1 + 1, m.N - 1)}, tol)


def check_intersection_conditions(m: CML0k2Model, tol: float = DEFAULT_TOL) -> ConditionResult:
    """Parameter identities under which a waypoint model is also CM_L over ``[0, N]``.

    ``G_{N,j}' G_N^{-1} G_{N,i} = 0`` for ``j in [0, k2-3]``, ``i in [j+2, k2-1]``, and
    ``G_l^{-1} G_{l,k2} = G_{l+1,l}' G_{l+1}^{-1} G_{l+1,k2} + G_{N,l}' G_N^{-1} G_{N,k2}``
    for ``l in [0, k2-2]``.
    """
    k2 = m.k2
    GN = factor_pd(m.G(m.N), f"G_{m.N}")
    gain = lambda i: _get(m.terminal_gain, i, "terminal_gain")
    wc = lambda k: _get(m.waypoint_coupling, k, "waypoint_coupling")
    pairs = {}
    for j in range(0, k2 - 2):
        for i in range(j + 2, k2):
            prod = gain(j).T @ GN.solve(gain(i))
            pairs[("gain_product", j, i)] = (prod, np.zeros_like(prod))
    for l in range(0, k2 - 1):
        lhs = factor_pd(m.G(l), f"G_{l}").solve(wc(l))
        rhs = (m.A(l + 1).T @ factor_pd(m.G(l + 1), f"G_{l + 1}").solve(wc(l + 1))
               + gain(l).T @ GN.solve(gain(k2)))
        pairs[("coupling_recursion", l)] = (lhs, rhs)
    return _compare(pairs, tol)


# --- boundary forms -----------------------------------------------------------

def boundary_endpoint_joint(b: Boundary):
    """``(Cov x_0, Cov x_N, Cov(x_0, x_N))`` implied by a CM_L boundary."""
    G0 = _require(b.other_end_cov, "boundary.other_end_cov")
    K = _require(b.cross_gain, "boundary.cross_gain")
    GN = b.endpoint_cov
    cross = K @ GN
    return G0 + K @ GN @ K.T, GN.copy(), cross


def boundary_from_endpoint_joint(cov_x0, cov_xN, cross) -> Boundary:
    """CM_L boundary reproducing a given joint law of ``(x_0, x_N)``.

    ``G_N = cov_xN``, ``G_{0,N} = cross cov_xN^{-1}``,
    ``G_0 = cov_x0 - cross cov_xN^{-1} cross'``.
    """
    cov_x0, cov_xN, cross = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (cov_x0, cov_xN, cross))
    if not (cov_x0.shape == cov_xN.shape == cross.shape):
        raise DimensionMismatch("endpoint joint blocks must share one shape")
    joint = np.block([[cov_x0, cross], [cross.T, cov_xN]])
    factor_pd(joint, "endpoint joint covariance")
    fN = factor_pd(cov_xN, "cov_xN")
    gain = fN.solve(cross.T).T
    G0 = cov_x0 - gain @ cross.T
    return Boundary(endpoint_cov=cov_xN, cross_gain=gain, other_end_cov=0.5 * (G0 + G0.T))


def to_initial_form(b: Boundary) -> InitialFormBoundary:
    """Rewrite ``x_N = e_N, x_0 = G_{0,N} x_N + e_0`` as ``x_0 = w_0, x_N = G_{N,0} x_0 + w_N``."""
    P0, PN, cross = boundary_endpoint_joint(b)
    gain = factor_pd(P0, "Cov x_0").solve(cross).T
    QN = PN - gain @ cross
    return InitialFormBoundary(_block(P0), _block(gain), _block(0.5 * (QN + QN.T)))


def from_initial_form(b: InitialFormBoundary) -> Boundary:
    P0 = b.initial_cov
    cross = P0 @ b.terminal_gain.T
    PN = b.terminal_gain @ P0 @ b.terminal_gain.T + b.terminal_cov
    return boundary_from_endpoint_joint(P0, PN, cross)


# --- random fixtures ----------------------------------------------------------

MAX_TRANSITION_NORM = 1.2


def random_transition(rng: np.random.Generator, d: int) -> np.ndarray:
    """Uniform ``[-1, 1]`` entries, shrunk to spectral norm at most 1.2."""
    a = rng.uniform(-1.0, 1.0, size=(d, d))
    norm = np.linalg.norm(a, 2)
    if norm > MAX_TRANSITION_NORM:
        a *= MAX_TRANSITION_NORM / norm
    return a


def random_cov(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.uniform(-1.0, 1.0, size=(d, d))
    return a @ a.T + 0.1 * np.eye(d)


def random_gain(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(d, d))


def random_markov_model(rng: np.random.Generator, N: int, d: int) -> MarkovModel:
    return MarkovModel(
        N, d,
        transition={k: random_transition(rng, d) for k in range(1, N + 1)},
        noise_cov={k: random_cov(rng, d) for k in range(0, N + 1)},
    )


def random_boundary(rng: np.random.Generator, d: int) -> Boundary:
    return Boundary(random_cov(rng, d), random_gain(rng, d), random_cov(rng, d))


def random_cml_model(rng: np.random.Generator, N: int, d: int, with_boundary: bool = True) -> CMcModel:
    inner = range(1, N)
    return CMcModel(
        "L", N, d,
        transition={k: random_transition(rng, d) for k in inner},
        coupling={k: random_gain(rng, d) for k in inner},
        noise_cov={k: random_cov(rng, d) for k in inner},
        boundary=random_boundary(rng, d) if with_boundary else None,
    )


def random_cmf_model(rng: np.random.Generator, N: int, d: int) -> CMcModel:
    inner = range(2, N + 1)
    return CMcModel(
        "F", N, d,
        transition={k: random_transition(rng, d) for k in inner},
        coupling={k: random_gain(rng, d) for k in inner},
        noise_cov={k: random_cov(rng, d) for k in range(1, N + 1)},
        boundary=Boundary(random_cov(rng, d)),
        first_step=random_transition(rng, d),
    )


def random_cml_window_model(rng: np.random.Generator, N: int, d: int, k1: int) -> CMcModel:
    """Random CM_L model obeying the reciprocity identity exactly for ``k in [k1+1, N-2]``.

    Couplings ``G_{k,N}`` for ``k <= k1`` stay random; the rest are solved
    backwards from a random ``G_{N-1,N}``.  ``k1 = 0`` yields a reciprocal model.
    """
    m = random_cml_model(rng, N, d)
    coupling = dict(m.coupling)
    for k in range(N - 2, k1, -1):
        coupling[k] = m.G(k) @ m.A(k + 1).T @ pd_inverse(m.G(k + 1)) @ coupling[k + 1]
    return m.replace(coupling=coupling)


def solve_waypoint_couplings(m: CML0k2Model, start: Optional[int] = None) -> CML0k2Model:
    """Re-solve the ``G_{l,k2}`` so that the coupling-recursion identities hold for ``l <= start``."""
    k2 = m.k2
    start = k2 - 2 if start is None else start
    wc = dict(m.waypoint_coupling)
    GN_inv = pd_inverse(m.G(m.N))
    for l in range(start, -1, -1):
        rhs = (m.A(l + 1).T @ pd_inverse(m.G(l + 1)) @ wc[l + 1]
               + m.terminal_gain[l].T @ GN_inv @ m.terminal_gain[k2])
        wc[l] = m.G(l) @ rhs
    return m.replace(waypoint_coupling=wc)


def random_cml0k2_model(
    rng: np.random.Generator, N: int, d: int, k2: int, satisfy: bool = True
) -> CML0k2Model:
    """Random waypoint model; with ``satisfy`` its precision is CM_L over ``[0, N]``.

    Feasibility: only one adjacent pair ``G_{N,m}, G_{N,m+1}`` (``m + 1 < k2``)
    of the gains on ``x_0..x_{k2-1}`` is nonzero, so every gain product
    vanishes; the ``G_{l,k2}`` are then solved from the coupling recursion.
    """
    gains = {i: np.zeros((d, d)) for i in range(0, k2)}
    gains[k2] = random_gain(rng, d)
    if satisfy:
        m0 = int(rng.integers(0, k2 - 1))
        gains[m0] = random_gain(rng, d)
        gains[m0 + 1] = random_gain(rng, d)
    else:
        gains.update({i: random_gain(rng, d) for i in range(0, k2)})
    model = CML0k2Model(
        N, d, k2,
        transition={k: random_transition(rng, d) for k in list(range(1, k2)) + list(range(k2 + 1, N))},
        waypoint_coupling={k: random_gain(rng, d) for k in range(0, k2)},
        terminal_gain=gains,
        terminal_coupling={k: random_gain(rng, d) for k in range(k2 + 1, N)},
        noise_cov={k: random_cov(rng, d) for k in range(0, N + 1)},
    )
    return solve_waypoint_couplings(model) if satisfy else model
