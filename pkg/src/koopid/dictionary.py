"""Delay embedding, lifting dictionaries, and training-matrix assembly.

A lifted state stacks the current frame and ``z`` delayed frames of the
(possibly pre-lifted) observables, followed by the ``z`` preceding inputs
when the system is controlled:

    gamma_i = [h(x_i); h(x_{i-1}); ...; h(x_{i-z}); u_{i-1}; ...; u_{i-z}]

where ``h(x) = [g(x); pre_lift(g(x))]``.  A second, user-chosen lifting
``f(gamma)`` (polynomial monomials, radial distances, or radial distances
followed by monomials) supplies the nonlinear regressors.

Monomials are ordered graded-lexicographically: ascending total degree,
and within a degree by ascending `itertools.combinations_with_replacement`
order on variable indices (equivalently, descending lexicographic order on
exponent vectors with lower-indexed variables ranked higher).  This order
is part of the serialization contract; see ``MONOMIAL_ORDER_VERSION``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .validation import check_count, check_matrix

MONOMIAL_ORDER_VERSION = "grlex-1"


# ---------------------------------------------------------------------------
# monomial machinery
# ---------------------------------------------------------------------------

def dict_output_dim(n_vars: int, min_degree: int, max_degree: int) -> int:
    """Number of monomials in ``n_vars`` variables with total degree in
    ``[min_degree, max_degree]`` (combinations with repetition)."""
    n = check_count(n_vars, "n_vars")
    lo = check_count(min_degree, "min_degree", minimum=2)
    hi = check_count(max_degree, "max_degree", minimum=lo)
    return sum(math.comb(n + k - 1, k) for k in range(lo, hi + 1))


def monomial_index_tuples(n_vars: int, min_degree: int, max_degree: int):
    """Variable-index tuples for each monomial in graded-lex order.

    A tuple ``(0, 0, 2)`` stands for ``x0 * x0 * x2``.
    """
    n = check_count(n_vars, "n_vars")
    lo = check_count(min_degree, "min_degree", minimum=2)
    hi = check_count(max_degree, "max_degree", minimum=lo)
    out = []
    for k in range(lo, hi + 1):
        out.extend(itertools.combinations_with_replacement(range(n), k))
    return out


def eval_monomials(terms, X: np.ndarray) -> np.ndarray:
    """Evaluate monomials given as index tuples on columns of ``X`` (n x d)."""
    d = X.shape[1]
    out = np.empty((len(terms), d))
    for row, term in enumerate(terms):
        acc = X[term[0]].copy()
        for v in term[1:]:
            acc *= X[v]
        out[row] = acc
    return out


def monomial_jacobian(terms, x: np.ndarray) -> np.ndarray:
    """Jacobian of the monomial vector at a point ``x`` (length n)."""
    n = x.size
    jac = np.zeros((len(terms), n))
    for row, term in enumerate(terms):
        counts: dict[int, int] = {}
        for v in term:
            counts[v] = counts.get(v, 0) + 1
        for v, e in counts.items():
            part = float(e)
            for w, ew in counts.items():
                if w == v:
                    part *= x[w] ** (ew - 1)
                else:
                    part *= x[w] ** ew
            jac[row, v] = part
    return jac


# ---------------------------------------------------------------------------
# lifting specs
# ---------------------------------------------------------------------------

SCOPE_LATEST = "latest"
SCOPE_ALL = "all"


@dataclass(frozen=True)
class PolynomialLift:
    """Monomials of the observable frames, degrees ``min_degree..max_degree``.

    ``scope`` selects the variables: ``"latest"`` uses only the newest frame,
    ``"all"`` uses every delayed frame.  Degree-1 terms are excluded; they
    already appear verbatim in the lifted state.
    """

    min_degree: int = 2
    max_degree: int = 2
    scope: str = SCOPE_ALL

    def __post_init__(self):
        if self.min_degree < 2:
            raise ValueError("min_degree must be >= 2 (degree-1 terms duplicate the state)")
        if self.max_degree < self.min_degree:
            raise ValueError("max_degree must be >= min_degree")
        if self.scope not in (SCOPE_LATEST, SCOPE_ALL):
            raise ValueError(f"scope must be 'latest' or 'all', got {self.scope!r}")


@dataclass(frozen=True)
class RbfLift:
    """Euclidean distances from the newest observable block to fixed centers.

    ``centers`` is m-by-J: one column per radial function.
    """

    centers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "centers", check_matrix(self.centers, "centers"))


@dataclass(frozen=True)
class ComposedLift:
    """Radial distances followed by monomials of the radial outputs."""

    centers: np.ndarray
    min_degree: int = 2
    max_degree: int = 2

    def __post_init__(self):
        object.__setattr__(self, "centers", check_matrix(self.centers, "centers"))
        if self.min_degree < 2:
            raise ValueError("min_degree must be >= 2")
        if self.max_degree < self.min_degree:
            raise ValueError("max_degree must be >= min_degree")


Lifting = Optional[PolynomialLift | RbfLift | ComposedLift]


def lifting_output_dim(lift: Lifting, n_vars: int) -> int:
    """Output dimension of a lifting applied to ``n_vars`` input variables."""
    if lift is None:
        return 0
    if isinstance(lift, PolynomialLift):
        return dict_output_dim(n_vars, lift.min_degree, lift.max_degree)
    if isinstance(lift, RbfLift):
        return lift.centers.shape[1]
    if isinstance(lift, ComposedLift):
        return dict_output_dim(lift.centers.shape[1], lift.min_degree, lift.max_degree)
    raise TypeError(f"unknown lifting {lift!r}")


def sample_rbf_centers(m: int, n_centers: int, lo, hi, rng: np.random.Generator) -> np.ndarray:
    """Draw RBF centers uniformly in the box ``[lo, hi]`` per observable."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (m,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (m,))
    if np.any(hi <= lo):
        raise ValueError("center box requires lo < hi componentwise")
    return rng.uniform(lo[:, None], hi[:, None], size=(m, n_centers))


# ---------------------------------------------------------------------------
# dictionary spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DictionarySpec:
    """Declarative description of the delay embedding and liftings.

    m: observable dimension; q: input dimension (0 for autonomous systems);
    z: delay depth; pre_lift: lifting applied inside each frame (usually
    None); lift: the nonlinear regressor lifting applied to the delay state.
    """

    m: int
    q: int = 0
    z: int = 0
    pre_lift: Lifting = None
    lift: Lifting = None

    def __post_init__(self):
        check_count(self.m, "m")
        check_count(self.q, "q", minimum=0)
        check_count(self.z, "z", minimum=0)
        if isinstance(self.pre_lift, PolynomialLift) and self.pre_lift.scope != SCOPE_LATEST:
            raise ValueError("pre_lift polynomials act on a single frame; use scope='latest'")

    @property
    def pre_dim(self) -> int:
        """Extra entries appended to each frame by the pre-lifting."""
        return lifting_output_dim(self.pre_lift, self.m)

    @property
    def frame_dim(self) -> int:
        return self.m + self.pre_dim

    @property
    def obs_dim(self) -> int:
        """Length of the observable block: (z+1) frames."""
        return (self.z + 1) * self.frame_dim

    @property
    def state_dim(self) -> int:
        """Full delay-state dimension, including embedded past inputs."""
        return self.obs_dim + (self.z * self.q if self.q > 0 else 0)

    @property
    def controlled(self) -> bool:
        return self.q > 0

    @property
    def lift_dim(self) -> int:
        if self.lift is None:
            return 0
        if isinstance(self.lift, PolynomialLift):
            n_vars = self.frame_dim if self.lift.scope == SCOPE_LATEST else self.obs_dim
            return dict_output_dim(n_vars, self.lift.min_degree, self.lift.max_degree)
        return lifting_output_dim(self.lift, self.m)

    def lift_variable_count(self) -> int:
        """Number of delay-state entries the lifting reads (from index 0)."""
        if isinstance(self.lift, PolynomialLift):
            return self.frame_dim if self.lift.scope == SCOPE_LATEST else self.obs_dim
        if isinstance(self.lift, (RbfLift, ComposedLift)):
            return self.m
        return 0


def _apply_frame_lift(lift: Lifting, G: np.ndarray) -> np.ndarray:
    """Evaluate a per-frame lifting on observable columns ``G`` (m x d)."""
    if lift is None:
        return np.empty((0, G.shape[1]))
    if isinstance(lift, PolynomialLift):
        terms = monomial_index_tuples(G.shape[0], lift.min_degree, lift.max_degree)
        return eval_monomials(terms, G)
    if isinstance(lift, RbfLift):
        return _rbf_distances(G, lift.centers)
    if isinstance(lift, ComposedLift):
        r = _rbf_distances(G, lift.centers)
        terms = monomial_index_tuples(r.shape[0], lift.min_degree, lift.max_degree)
        return eval_monomials(terms, r)
    raise TypeError(f"unknown lifting {lift!r}")


def _rbf_distances(G: np.ndarray, centers: np.ndarray) -> np.ndarray:
    if G.shape[0] != centers.shape[0]:
        raise ValueError(
            f"observable dim {G.shape[0]} does not match center dim {centers.shape[0]}"
        )
    # (J, d) matrix of 2-norm distances
    diff = G[:, None, :] - centers[:, :, None]
    return np.sqrt(np.einsum("mjd,mjd->jd", diff, diff))


def lift_frames(spec: DictionarySpec, Y: np.ndarray) -> np.ndarray:
    """Per-frame map h: stack observables with their pre-lifting, columnwise."""
    if Y.shape[0] != spec.m:
        raise ValueError(f"expected {spec.m} observable rows, got {Y.shape[0]}")
    if spec.pre_lift is None:
        return Y
    return np.vstack([Y, _apply_frame_lift(spec.pre_lift, Y)])


def eval_lift(spec: DictionarySpec, gamma: np.ndarray) -> np.ndarray:
    """Evaluate the regressor lifting on one delay state or a matrix of them.

    Accepts a vector of length ``state_dim`` or a ``state_dim x d`` matrix;
    returns ``(L,)`` or ``(L, d)`` accordingly.  Embedded input entries are
    never fed to the lifting.
    """
    g = np.asarray(gamma, dtype=float)
    single = g.ndim == 1
    G = g[:, None] if single else g
    if G.shape[0] != spec.state_dim:
        raise ValueError(f"delay state must have length {spec.state_dim}, got {G.shape[0]}")
    lift = spec.lift
    if lift is None:
        out = np.empty((0, G.shape[1]))
    elif isinstance(lift, PolynomialLift):
        n_vars = spec.lift_variable_count()
        terms = monomial_index_tuples(n_vars, lift.min_degree, lift.max_degree)
        out = eval_monomials(terms, G[:n_vars])
    else:
        out = _apply_frame_lift(lift, G[: spec.m])
    return out[:, 0] if single else out


def lift_jacobian(spec: DictionarySpec, gamma: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of ``eval_lift`` at a single delay state (L x state_dim).

    Monomial rows use the exponent rule; radial rows use ``(g - c)/||g - c||``
    with a zero gradient at center coincidence.
    """
    g = np.asarray(gamma, dtype=float).ravel()
    if g.size != spec.state_dim:
        raise ValueError(f"delay state must have length {spec.state_dim}, got {g.size}")
    L = spec.lift_dim
    jac = np.zeros((L, spec.state_dim))
    lift = spec.lift
    if lift is None:
        return jac
    if isinstance(lift, PolynomialLift):
        n_vars = spec.lift_variable_count()
        terms = monomial_index_tuples(n_vars, lift.min_degree, lift.max_degree)
        jac[:, :n_vars] = monomial_jacobian(terms, g[:n_vars])
        return jac
    obs = g[: spec.m]
    centers = lift.centers
    diff = obs[:, None] - centers  # (m, J)
    dist = np.sqrt((diff**2).sum(axis=0))  # (J,)
    grad = np.zeros((centers.shape[1], spec.m))  # d dist_j / d obs
    nz = dist > 0
    grad[nz] = (diff[:, nz] / dist[nz]).T
    if isinstance(lift, RbfLift):
        jac[:, : spec.m] = grad
        return jac
    terms = monomial_index_tuples(centers.shape[1], lift.min_degree, lift.max_degree)
    jac[:, : spec.m] = monomial_jacobian(terms, dist) @ grad
    return jac


# ---------------------------------------------------------------------------
# series and assembled data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservableSeries:
    """Uniformly sampled observable snapshots, optionally with inputs.

    ``Y`` is m-by-T with one snapshot per column; ``U`` (q-by-T), when
    present, is aligned with the columns of ``Y``; ``dt`` is the sample
    interval.
    """

    Y: np.ndarray
    U: Optional[np.ndarray] = None
    dt: float = 1.0

    def __post_init__(self):
        y = check_matrix(self.Y, "Y")
        object.__setattr__(self, "Y", y)
        if y.shape[1] < 2:
            raise ValueError("series needs at least 2 snapshots")
        if self.U is not None:
            u = check_matrix(self.U, "U")
            if u.shape[1] != y.shape[1]:
                raise ValueError(
                    f"U has {u.shape[1]} columns but Y has {y.shape[1]}"
                )
            object.__setattr__(self, "U", u)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def m(self) -> int:
        return self.Y.shape[0]

    @property
    def n_samples(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class LiftedData:
    """Training matrices ready for least squares.

    Columns are aligned snapshot tuples ``(gamma_i, gamma_{i+1}, u_i,
    f(gamma_i))``.  ``spec`` may be None for synthetic data assembled
    directly from matrices.
    """

    Gamma: np.ndarray
    GammaPlus: np.ndarray
    Uin: Optional[np.ndarray] = None
    Fn: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    spec: Optional[DictionarySpec] = None
    dt: float = 1.0

    def __post_init__(self):
        g = check_matrix(self.Gamma, "Gamma")
        gp = check_matrix(self.GammaPlus, "GammaPlus")
        object.__setattr__(self, "Gamma", g)
        object.__setattr__(self, "GammaPlus", gp)
        if gp.shape != g.shape:
            raise ValueError(f"Gamma {g.shape} and GammaPlus {gp.shape} differ")
        d = g.shape[1]
        if self.Uin is not None:
            u = check_matrix(self.Uin, "Uin")
            if u.shape[1] != d:
                raise ValueError(f"Uin has {u.shape[1]} columns, expected {d}")
            object.__setattr__(self, "Uin", u)
        fn = np.asarray(self.Fn, dtype=float)
        if fn.size == 0:
            fn = np.empty((0, d))
        fn = check_matrix(fn, "Fn", allow_empty=True)
        if fn.shape[1] != d:
            raise ValueError(f"Fn has {fn.shape[1]} columns, expected {d}")
        object.__setattr__(self, "Fn", fn)

    @property
    def d(self) -> int:
        return self.Gamma.shape[1]

    @property
    def state_dim(self) -> int:
        return self.Gamma.shape[0]

    @property
    def lift_dim(self) -> int:
        return self.Fn.shape[0]


def _delay_state_matrix(spec: DictionarySpec, series: ObservableSeries) -> np.ndarray:
    """Delay states for every admissible index i = z..T-1, as columns."""
    H = lift_frames(spec, series.Y)
    T = series.n_samples
    z = spec.z
    blocks = [H[:, z - k : T - k] for k in range(z + 1)]
    if spec.controlled:
        if series.U is None:
            raise ValueError("spec is controlled but series has no inputs")
        if series.U.shape[0] != spec.q:
            raise ValueError(
                f"series has {series.U.shape[0]} input rows, spec expects {spec.q}"
            )
        blocks.extend(series.U[:, z - k : T - k] for k in range(1, z + 1))
    return np.vstack(blocks)


def build_delay_state(series: ObservableSeries, spec: DictionarySpec, i: int) -> np.ndarray:
    """Delay state at snapshot index ``i`` (needs ``i >= z`` history)."""
    if i < spec.z:
        raise ValueError(f"index {i} has insufficient history (need i >= {spec.z})")
    if i >= series.n_samples:
        raise ValueError(f"index {i} out of range for {series.n_samples} samples")
    H = lift_frames(spec, series.Y)
    parts = [H[:, i - k] for k in range(spec.z + 1)]
    if spec.controlled:
        if series.U is None:
            raise ValueError("spec is controlled but series has no inputs")
        parts.extend(series.U[:, i - k] for k in range(1, spec.z + 1))
    return np.concatenate(parts)


def assemble(series: ObservableSeries, spec: DictionarySpec, *, augmented: bool = False) -> LiftedData:
    """Assemble training matrices from a snapshot series.

    Produces ``d = T - z - 1`` aligned columns.  With ``augmented=True`` the
    lifting values are appended to the state itself (the purely linear
    estimator's lifted coordinates) and ``Fn`` is left empty.
    """
    T = series.n_samples
    if T < spec.z + 2:
        raise ValueError(f"series too short: need at least {spec.z + 2} samples, got {T}")
    states = _delay_state_matrix(spec, series)
    if augmented and spec.lift is not None:
        states = np.vstack([states, eval_lift(spec, states)])
    gamma = states[:, :-1]
    gamma_plus = states[:, 1:]
    uin = None
    if spec.controlled:
        uin = series.U[:, spec.z : T - 1]
    fn = np.empty((0, gamma.shape[1]))
    if not augmented and spec.lift is not None:
        fn = eval_lift(spec, gamma)
    return LiftedData(Gamma=gamma, GammaPlus=gamma_plus, Uin=uin, Fn=fn, spec=spec, dt=series.dt)
