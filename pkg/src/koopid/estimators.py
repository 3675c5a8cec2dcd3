"""Model families fitted from lifted snapshot data, plus rollout machinery.

Estimators follow the scikit-learn convention: constructor takes the fit
hyperparameter (the SVD truncation ``rank``), ``fit`` consumes a
:class:`~koopid.dictionary.LiftedData` and stores learned matrices with a
trailing underscore, and ``predict``/``rollout`` iterate the learned map.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .dictionary import DictionarySpec, LiftedData, eval_lift, lift_frames
from .numerics import FULL_RANK, PodBasis, truncated_pinv_solve
from .validation import check_matrix

# A rollout is declared divergent once the state norm passes this bound.
DIVERGENCE_LIMIT = 1e12


@dataclass
class RolloutResult:
    """Trajectory from iterating a model map.

    ``states`` has one column per step (steps+1 total); columns after a
    divergence are NaN.  ``diverged_at`` is the first bad step index, or
    None when the whole rollout stayed finite.
    """

    states: np.ndarray
    diverged_at: Optional[int] = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    @property
    def valid_states(self) -> np.ndarray:
        if self.diverged_at is None:
            return self.states
        return self.states[..., : self.diverged_at]


class _KoopmanBase(BaseEstimator):
    """Shared fit/rollout plumbing for all model families."""

    controlled = False
    uses_lift = False

    def __init__(self, rank=FULL_RANK):
        self.rank = rank

    # -- fitting -----------------------------------------------------------
    def _regressors(self, data: LiftedData) -> np.ndarray:
        blocks = [data.Gamma]
        if self.controlled:
            if data.Uin is None:
                raise ValueError(f"{type(self).__name__} requires input data (Uin)")
            blocks.append(data.Uin)
        if self.uses_lift:
            if data.Fn.shape[0] > 0:
                blocks.append(data.Fn)
        return np.vstack(blocks) if len(blocks) > 1 else blocks[0]

    def fit(self, data: LiftedData):
        if data.d < 1:
            raise ValueError("no training columns")
        stacked = self._regressors(data)
        coeff = truncated_pinv_solve(data.GammaPlus, stacked, self.rank)
        self._split(coeff, data)
        self.spec_ = data.spec
        self.dt_ = data.dt
        self.state_dim_ = data.state_dim
        self.lift_dim_ = data.Fn.shape[0]
        resid = data.GammaPlus - coeff @ stacked
        self.residual_ = float(np.linalg.norm(resid))
        if self.controlled:
            scale = np.linalg.norm(data.Gamma) / max(data.d, 1)
            if np.linalg.norm(data.Uin) <= 1e-12 * max(scale, 1.0) * data.d:
                self.degenerate_input_ = True
                warnings.warn(
                    "training inputs are (numerically) zero; the input matrix is "
                    "the unidentifiable minimum-norm solution",
                    RuntimeWarning,
                )
            else:
                self.degenerate_input_ = False
        return self

    def _split(self, coeff: np.ndarray, data: LiftedData):  # pragma: no cover
        raise NotImplementedError

    # -- simulation --------------------------------------------------------
    @property
    def model_dim(self) -> int:
        """Dimension of the iterated state."""
        return self.state_dim_

    def step(self, state: np.ndarray, u: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError

    def rollout(self, gamma0, steps: int, inputs=None) -> RolloutResult:
        return rollout(self, gamma0, steps, inputs)

    def predict(self, gamma0, steps: int, inputs=None) -> np.ndarray:
        """State trajectory as a matrix; see :func:`rollout` for diagnostics."""
        return self.rollout(gamma0, steps, inputs).states

    def _lift(self, state: np.ndarray) -> np.ndarray:
        if self.spec_ is not None:
            return eval_lift(self.spec_, state)
        if getattr(self, "lift_fn_", None) is not None:
            return self.lift_fn_(state)
        raise ValueError(
            "model was fitted from spec-less data; set `lift_fn_` to roll it out"
        )


class Dmd(_KoopmanBase):
    """Linear one-step map ``gamma+ = A gamma`` by truncated-SVD least squares."""

    def _split(self, coeff, data):
        self.A_ = coeff

    def step(self, state, u=None):
        return self.A_ @ state


class Edmdc(_KoopmanBase):
    """Linear controlled map ``gamma+ = A gamma + B u``."""

    controlled = True

    def _split(self, coeff, data):
        M = data.state_dim
        self.A_ = coeff[:, :M]
        self.B_ = coeff[:, M:]

    def step(self, state, u=None):
        out = self.A_ @ state
        if u is not None:
            out = out + self.B_ @ _col(u, state.ndim)
        return out


class NonlinearPredictor(_KoopmanBase):
    """Nonlinear map ``gamma+ = A gamma + C f(gamma)``.

    The lifting ``f`` is re-evaluated on the current state at every step, so
    the dictionary's nonlinear dependence survives into prediction.
    """

    uses_lift = True

    def _split(self, coeff, data):
        M = data.state_dim
        self.A_ = coeff[:, :M]
        self.C_ = coeff[:, M:]

    def step(self, state, u=None):
        out = self.A_ @ state
        if self.C_.shape[1]:
            out = out + self.C_ @ self._lift(state)
        return out


class NonlinearControlledPredictor(_KoopmanBase):
    """Nonlinear controlled map ``gamma+ = A gamma + B u + C f(gamma)``."""

    controlled = True
    uses_lift = True

    def _split(self, coeff, data):
        M = data.state_dim
        q = data.Uin.shape[0]
        self.A_ = coeff[:, :M]
        self.B_ = coeff[:, M : M + q]
        self.C_ = coeff[:, M + q :]

    def step(self, state, u=None):
        out = self.A_ @ state
        if u is not None:
            out = out + self.B_ @ _col(u, state.ndim)
        if self.C_.shape[1]:
            out = out + self.C_ @ self._lift(state)
        return out


class ReducedModel:
    """Nonlinear model projected onto a POD basis.

    Iterates the reduced coordinates and reconstructs full states with the
    basis; the lifting is always evaluated on the reconstructed state.
    """

    def __init__(self, basis: PodBasis, Ared, Cred, Bred=None, *,
                 spec: Optional[DictionarySpec] = None, dt: float = 1.0):
        self.basis = basis
        self.Ared = check_matrix(Ared, "Ared")
        self.Cred = check_matrix(Cred, "Cred", allow_empty=True)
        self.Bred = None if Bred is None else check_matrix(Bred, "Bred")
        self.spec_ = spec
        self.dt_ = dt

    @property
    def controlled(self) -> bool:
        return self.Bred is not None

    @property
    def model_dim(self) -> int:
        return self.basis.rho

    def step(self, omega: np.ndarray, u: Optional[np.ndarray] = None) -> np.ndarray:
        out = self.Ared @ omega
        if u is not None and self.Bred is not None:
            out = out + self.Bred @ _col(u, omega.ndim)
        if self.Cred.size:
            out = out + self.Cred @ eval_lift(self.spec_, self.basis.reconstruct(omega))
        return out

    def rollout(self, gamma0, steps: int, inputs=None) -> RolloutResult:
        """Rollout from a full-dimension state; returns reconstructed states."""
        gamma0 = np.asarray(gamma0, dtype=float)
        omega0 = self.basis.project(gamma0)
        res = rollout(self, omega0, steps, inputs)
        return RolloutResult(states=self.basis.Phi @ res.states, diverged_at=res.diverged_at)

    def predict(self, gamma0, steps: int, inputs=None) -> np.ndarray:
        return self.rollout(gamma0, steps, inputs).states


def _col(u, ndim: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1)
    return u[:, None] if ndim == 2 and u.ndim == 1 else u


def rollout(model, gamma0, steps: int, inputs=None) -> RolloutResult:
    """Iterate ``model.step`` for ``steps`` steps.

    ``gamma0`` may be a vector or a matrix of initial states as columns
    (batch rollout).  ``inputs`` is a q-by-steps matrix, required iff the
    model is controlled; batch rollouts share the input sequence.  On
    divergence the remaining columns are NaN and the first bad step index is
    reported.
    """
    g = np.asarray(gamma0, dtype=float)
    single = g.ndim == 1
    if g.shape[0] != model.model_dim:
        raise ValueError(f"initial state must have dim {model.model_dim}, got {g.shape[0]}")
    controlled = getattr(model, "controlled", False)
    if controlled:
        if inputs is None:
            raise ValueError("controlled model requires an input sequence")
        U = np.asarray(inputs, dtype=float)
        if U.ndim == 1:
            U = U[None, :]
        if U.shape[1] < steps:
            raise ValueError(f"inputs cover {U.shape[1]} steps, need {steps}")
    elif inputs is not None:
        raise ValueError("autonomous model does not accept inputs")

    shape = (model.model_dim, steps + 1) if single else (model.model_dim, g.shape[1], steps + 1)
    states = np.full(shape, np.nan)
    states[..., 0] = g
    current = g
    diverged_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            u = U[:, k] if controlled else None
            current = model.step(current, u)
            bad = ~np.isfinite(current)
            if bad.any() or np.abs(np.where(bad, 0.0, current)).max() > DIVERGENCE_LIMIT:
                if single:
                    diverged_at = k + 1
                    break
                # freeze diverged batch columns as NaN, keep the rest going
                col_bad = ~np.all(np.isfinite(current) & (np.abs(current) <= DIVERGENCE_LIMIT), axis=0)
                current = np.where(col_bad[None, :], np.nan, current)
                if diverged_at is None:
                    diverged_at = k + 1
                if np.all(col_bad):
                    break
                states[..., k + 1] = current
                continue
            states[..., k + 1] = current
    return RolloutResult(states=states, diverged_at=diverged_at)


def reduce(model, basis: PodBasis) -> ReducedModel:
    """Project a nonlinear model onto a POD basis."""
    if basis.Phi.shape[0] != model.state_dim_:
        raise ValueError(
            f"basis has {basis.Phi.shape[0]} rows, model state dim is {model.state_dim_}"
        )
    phi = basis.Phi
    Ared = phi.T @ model.A_ @ phi
    Cred = phi.T @ model.C_ if getattr(model, "C_", None) is not None else np.empty((basis.rho, 0))
    Bred = phi.T @ model.B_ if getattr(model, "B_", None) is not None else None
    return ReducedModel(basis, Ared, Cred, Bred, spec=model.spec_, dt=model.dt_)


def delay_init(spec: DictionarySpec, observable_history, input_history=None) -> np.ndarray:
    """Pack observable/input history into a delay state (newest frame first).

    ``observable_history`` is m-by-(z+1) with column k holding the frame k
    steps in the past; ``input_history`` (q-by-z) defaults to zeros for the
    unknown past inputs.
    """
    obs = np.asarray(observable_history, dtype=float)
    if obs.ndim == 1:
        obs = obs[None, :] if spec.m == 1 else obs[:, None]
    if obs.shape != (spec.m, spec.z + 1):
        raise ValueError(
            f"observable history must be {spec.m}x{spec.z + 1}, got {obs.shape}"
        )
    H = lift_frames(spec, obs)
    parts = [H[:, k] for k in range(spec.z + 1)]
    if spec.controlled and spec.z > 0:
        if input_history is None:
            uh = np.zeros((spec.q, spec.z))
        else:
            uh = np.asarray(input_history, dtype=float).reshape(spec.q, spec.z)
        parts.extend(uh[:, k] for k in range(spec.z))
    return np.concatenate(parts)


def extrapolated_history(x: np.ndarray, dxdt: np.ndarray, z: int, dt: float) -> np.ndarray:
    """Backward-extrapolated observable history: frame k is ``x - k dt dx/dt``.

    Used to seed delay states from a single phase-space point and its time
    derivative (the unknown past frames of a grid initial condition).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dxdt = np.atleast_1d(np.asarray(dxdt, dtype=float))
    ks = np.arange(z + 1)
    return x[:, None] - dt * np.outer(dxdt, ks)
