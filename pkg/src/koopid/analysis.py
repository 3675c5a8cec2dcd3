"""Model evaluation: prediction error, basins of attraction, limit cycles,
fixed points with stability, direct-method phase response, and eigenmode
spectra of linear models."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .dictionary import LiftedData, eval_lift, lift_jacobian
from .estimators import delay_init, extrapolated_history, rollout
from .exceptions import NumericsError
from .simulators import DuffingParams, duffing_rhs, rk4_integrate

SETTLE_WINDOW = 200  # trailing steps inspected for steady-state settling


# ---------------------------------------------------------------------------
# prediction error
# ---------------------------------------------------------------------------

def l2_error(true_traj, pred_traj, dx: float) -> np.ndarray:
    """Per-step trapezoidal integral of the squared difference over stations."""
    a = np.asarray(true_traj, dtype=float)
    b = np.asarray(pred_traj, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 1:
        a, b = a[None, :], b[None, :]
    sq = (a - b) ** 2
    if sq.shape[0] == 1:
        return sq[0] * dx
    return np.trapezoid(sq, dx=dx, axis=0)


# ---------------------------------------------------------------------------
# basins of attraction
# ---------------------------------------------------------------------------

@dataclass
class BasinGridResult:
    """Steady-state observable labels on a 2-D grid of initial conditions.

    ``values[i, j]`` is the settled observable for (x1_axis[i], x2_axis[j]);
    NaN marks diverged or non-settling rollouts.
    """

    x1_axis: np.ndarray
    x2_axis: np.ndarray
    values: np.ndarray
    u_const: float


def _settled_labels(obs: np.ndarray, settle_tol: float, window: int) -> np.ndarray:
    """Label each row by its final value when the trailing window is flat."""
    if obs.shape[-1] < window + 1:
        raise ValueError(f"horizon too short for a {window}-step settling window")
    tail = obs[..., -window:]
    final = tail[..., -1]
    dev = np.max(np.abs(tail - final[..., None]), axis=-1)
    labels = np.where(np.isfinite(dev) & (dev < settle_tol), final, np.nan)
    return labels


def basin_map(model, x1_axis, x2_axis, u_const: float, horizon: int,
              settle_tol: float = 1e-4, observable: int = 0,
              window: int = SETTLE_WINDOW, threads: int = 1) -> BasinGridResult:
    """Basin labels from a fitted controlled model.

    Each grid point (x1, x2) is packed into a delay state by backward
    extrapolation (past frames ``x1 - k dt x2``, past inputs zero), rolled
    out under the constant input, and labeled by the settled observable.
    """
    spec = model.spec_
    if spec is None or spec.m != 1:
        raise ValueError("basin_map expects a model with a scalar observable")
    x1_axis = np.asarray(x1_axis, dtype=float)
    x2_axis = np.asarray(x2_axis, dtype=float)
    X1, X2 = np.meshgrid(x1_axis, x2_axis, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()])

    gammas = np.empty((spec.state_dim, pts.shape[1]))
    for j in range(pts.shape[1]):
        hist = extrapolated_history(pts[0, j], pts[1, j], spec.z, model.dt_)
        gammas[:, j] = delay_init(spec, hist)

    inputs = np.full((spec.q, horizon), u_const) if spec.controlled else None

    def run(chunk: np.ndarray) -> np.ndarray:
        res = rollout(model, chunk, horizon, inputs)
        return _settled_labels(res.states[observable], settle_tol, window)

    if threads > 1:
        splits = np.array_split(np.arange(pts.shape[1]), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda idx: run(gammas[:, idx]), splits))
        labels = np.concatenate(parts)
    else:
        labels = run(gammas)
    return BasinGridResult(x1_axis, x2_axis, labels.reshape(X1.shape), u_const)


def basin_map_duffing_reference(p: DuffingParams, x1_axis, x2_axis, u_const: float,
                                T: float, settle_tol: float = 1e-4,
                                window: int = SETTLE_WINDOW) -> BasinGridResult:
    """Ground-truth basin labels by direct batch simulation of the Duffing ODE."""
    x1_axis = np.asarray(x1_axis, dtype=float)
    x2_axis = np.asarray(x2_axis, dtype=float)
    X1, X2 = np.meshgrid(x1_axis, x2_axis, indexing="ij")
    x0 = np.stack([X1.ravel(), X2.ravel()])
    n = int(round(T / p.dt_sample))
    states = rk4_integrate(duffing_rhs(p, lambda t: u_const), x0, n, p.dt_sample, p.substeps)
    labels = _settled_labels(states[0], settle_tol, window)
    return BasinGridResult(x1_axis, x2_axis, labels.reshape(X1.shape), u_const)


def basin_agreement(a: BasinGridResult, b: BasinGridResult, tol: float = 0.5) -> float:
    """Fraction of cells with matching labels (NaN agrees only with NaN)."""
    va, vb = a.values, b.values
    if va.shape != vb.shape:
        raise ValueError("grids differ in shape")
    both_nan = np.isnan(va) & np.isnan(vb)
    close = np.abs(va - vb) < tol
    return float(np.mean(both_nan | np.nan_to_num(close, nan=False)))


# ---------------------------------------------------------------------------
# limit cycles
# ---------------------------------------------------------------------------

@dataclass
class CycleResult:
    """A detected periodic orbit.

    ``samples`` holds one period of states starting at the phase-zero
    upward threshold crossing (``round(period/dt)`` columns).
    ``phase_offset`` is the fractional sample from the interpolated
    crossing to ``samples[:, 0]`` (the crossing rarely falls exactly on a
    sample), so column ``j`` sits at phase ``2 pi (j + phase_offset) / n``.
    """

    period: float
    samples: np.ndarray
    transient_steps: int
    converged: bool
    threshold: float = 0.0
    observable: int = 0
    dt: float = 1.0
    phase_offset: float = 0.0


def upward_crossings(x: np.ndarray, threshold: float) -> np.ndarray:
    """Fractional sample indices where ``x`` crosses the threshold upward,
    linearly interpolated between samples."""
    x = np.asarray(x, dtype=float)
    below = x[:-1] < threshold
    above = x[1:] >= threshold
    idx = np.nonzero(below & above)[0]
    frac = (threshold - x[idx]) / (x[idx + 1] - x[idx])
    return idx + frac


def _stable_period(crossings: np.ndarray, rel_tol: float = 0.005,
                   min_intervals: int = 4) -> Optional[float]:
    """Mean crossing interval once the trailing intervals agree to rel_tol."""
    if crossings.size < min_intervals + 1:
        return None
    intervals = np.diff(crossings)
    tail = intervals[-min_intervals:]
    mean = tail.mean()
    if mean <= 0 or np.max(np.abs(tail - mean)) > rel_tol * mean:
        return None
    return float(mean)


def detect_cycle(states: np.ndarray, dt: float, observable: int = 0,
                 threshold: float = 0.0, transient: int = 0) -> CycleResult:
    """Detect a limit cycle in an already-computed trajectory.

    ``states`` may be a single observable row or a full state matrix; NaN
    columns from a diverged rollout are trimmed before crossing detection.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    obs = states[observable, transient:]
    finite = np.isfinite(obs)
    if not finite.all():
        obs = obs[: int(np.argmax(~finite))]
    crossings = upward_crossings(obs, threshold)
    period_steps = _stable_period(crossings)
    if period_steps is None:
        return CycleResult(period=np.nan, samples=np.empty((states.shape[0], 0)),
                           transient_steps=transient, converged=False,
                           threshold=threshold, observable=observable, dt=dt)
    n_per = int(round(period_steps))
    anchor = crossings[-2]
    start = transient + int(np.ceil(anchor))
    if start + n_per > states.shape[1]:
        shift = start + n_per - states.shape[1]
        start -= shift
        anchor -= shift
    samples = states[:, start : start + n_per]
    offset = (start - transient) - anchor
    return CycleResult(period=period_steps * dt, samples=samples,
                       transient_steps=transient, converged=True,
                       threshold=threshold, observable=observable, dt=dt,
                       phase_offset=float(offset % 1.0))


def find_limit_cycle(model, gamma0, observable: int = 0, threshold: float = 0.0,
                     transient: int = 1000, max_steps: int = 20000) -> CycleResult:
    """Roll the model out, discard the transient, and estimate the period.

    Controlled models are run with zero input.  ``converged`` is False when
    no stable crossing-interval run is found (decayed or irregular signal).
    """
    if max_steps <= transient:
        raise ValueError("max_steps must exceed transient")
    inputs = None
    if getattr(model, "controlled", False):
        q = model.spec_.q if model.spec_ is not None else model.B_.shape[1]
        inputs = np.zeros((q, max_steps))
    res = rollout(model, np.asarray(gamma0, dtype=float), max_steps, inputs)
    return detect_cycle(res.states, model.dt_, observable, threshold, transient)


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------

def find_fixed_point(model, u_const: float = 0.0, guess=None, tol: float = 1e-10,
                     max_iter: int = 50):
    """Newton solve of ``gamma = A gamma + B u + C f(gamma)``.

    Returns the fixed point and the eigenvalues of the one-step Jacobian
    ``A + C df/dgamma`` evaluated there.
    """
    spec = model.spec_
    if spec is None:
        raise ValueError("fixed-point search needs a model with a dictionary spec")
    A = model.A_
    C = getattr(model, "C_", None)
    B = getattr(model, "B_", None)
    M = A.shape[0]
    bias = np.zeros(M)
    if B is not None:
        bias = B @ np.full(B.shape[1], u_const)
    gamma = np.zeros(M) if guess is None else np.asarray(guess, dtype=float).copy()
    eye = np.eye(M)
    for _ in range(max_iter):
        fval = A @ gamma + bias - gamma
        jac_step = A.copy()
        if C is not None and C.shape[1]:
            fval = fval + C @ eval_lift(spec, gamma)
            jac_step = jac_step + C @ lift_jacobian(spec, gamma)
        if np.linalg.norm(fval) < tol:
            eigvals = np.linalg.eigvals(jac_step)
            return gamma, eigvals
        try:
            delta = np.linalg.solve(jac_step - eye, -fval)
        except np.linalg.LinAlgError as exc:
            raise NumericsError("singular Jacobian in fixed-point Newton solve") from exc
        gamma = gamma + delta
        if not np.all(np.isfinite(gamma)):
            raise NumericsError("fixed-point iteration diverged")
    raise NumericsError(f"Newton did not converge within {max_iter} iterations")


def map_jacobian(model, gamma: np.ndarray) -> np.ndarray:
    """Jacobian of the model's one-step map at ``gamma`` (input held fixed)."""
    jac = model.A_.copy()
    C = getattr(model, "C_", None)
    if C is not None and C.shape[1]:
        jac = jac + C @ lift_jacobian(model.spec_, np.asarray(gamma, dtype=float))
    return jac


# ---------------------------------------------------------------------------
# phase response curves (direct method)
# ---------------------------------------------------------------------------

def _model_stepper(model):
    def step(state, u=None):
        return model.step(state, u)

    return step


def estimate_prc_stepper(step: Callable, cycle: CycleResult, magnitude: float,
                         duration: float, phases: Sequence[float],
                         settle_cycles: int = 20) -> np.ndarray:
    """Direct-method PRC for any one-step map ``step(state, u) -> state``.

    For each phase, a pulse of the given magnitude and duration is applied
    starting on the cycle; the asymptotic phase shift is read from the
    offset of threshold-crossing times against an unperturbed reference and
    normalized by the pulse integral.  Returns rows ``(phase, Z)``.
    """
    if magnitude == 0:
        raise ValueError("pulse magnitude must be nonzero")
    if duration <= 0:
        raise ValueError("pulse duration must be positive")
    if not cycle.converged:
        raise ValueError("cycle has not converged; cannot estimate a PRC")
    dt = cycle.dt
    n_per = cycle.samples.shape[1]
    n_pulse = max(1, int(round(duration / dt)))
    total = n_pulse + (settle_cycles + 3) * n_per
    k_obs = cycle.observable
    thr = cycle.threshold

    def crossing_times(x0: np.ndarray, pulse: float) -> np.ndarray:
        obs = np.empty(total + 1)
        state = x0.copy()
        obs[0] = state[k_obs]
        for i in range(total):
            u = pulse if i < n_pulse else 0.0
            state = step(state, np.atleast_1d(u))
            if not np.all(np.isfinite(state)):
                raise NumericsError("trajectory diverged during PRC estimation")
            obs[i + 1] = state[k_obs]
        cr = upward_crossings(obs, thr)
        cr = cr[cr > n_pulse]
        if cr.size < settle_cycles:
            raise NumericsError("too few post-pulse crossings for PRC estimation")
        return cr * dt

    results = np.empty((len(phases), 2))
    for row, theta in enumerate(phases):
        # column j of the cycle sits at phase 2 pi (j + phase_offset) / n;
        # interpolate between neighbors so the pulse starts at the requested
        # phase rather than the nearest whole sample
        pos = ((theta % (2 * np.pi)) / (2 * np.pi) * n_per - cycle.phase_offset) % n_per
        j0 = int(np.floor(pos)) % n_per
        frac = pos - np.floor(pos)
        x0 = (1.0 - frac) * cycle.samples[:, j0] + frac * cycle.samples[:, (j0 + 1) % n_per]
        t_ref = crossing_times(x0, 0.0)
        t_pert = crossing_times(x0, magnitude)
        k = min(t_ref.size, t_pert.size) - 1
        shift = 2 * np.pi * (t_ref[k] - t_pert[k]) / cycle.period
        shift = (shift + np.pi) % (2 * np.pi) - np.pi
        results[row] = (theta, shift / (magnitude * duration))
    return results


def estimate_prc(model, cycle: CycleResult, magnitude: float, duration: float,
                 phases: Sequence[float], settle_cycles: int = 20) -> np.ndarray:
    """Direct-method PRC of a fitted controlled model around its cycle."""
    if not getattr(model, "controlled", False):
        raise ValueError("PRC estimation needs a controlled model (input channel)")
    return estimate_prc_stepper(_model_stepper(model), cycle, magnitude,
                                duration, phases, settle_cycles)


# ---------------------------------------------------------------------------
# eigenmode spectra of linear models
# ---------------------------------------------------------------------------

@dataclass
class EigenmodeReport:
    """Per-mode eigenvalue, oscillation frequency, and mean snapshot amplitude."""

    eigenvalues: np.ndarray
    frequencies: np.ndarray
    amplitudes: np.ndarray

    def sorted_by_amplitude(self) -> "EigenmodeReport":
        order = np.argsort(self.amplitudes)[::-1]
        return EigenmodeReport(self.eigenvalues[order], self.frequencies[order],
                               self.amplitudes[order])


def eigenmode_spectrum(model, data: LiftedData) -> EigenmodeReport:
    """Eigen-decomposition of a linear model with data-weighted amplitudes.

    Frequency per mode is ``Im(log lambda) / (2 pi dt)``; the amplitude is
    the mean of ``|w^T a_i|`` over snapshot columns, with left eigenvectors
    normalized against the right ones.
    """
    A = getattr(model, "A_", None)
    if A is None or A.shape[0] != A.shape[1]:
        raise ValueError("eigenmode spectrum needs a fitted linear model (square A)")
    if A.shape[0] != data.state_dim:
        raise ValueError("data state dimension does not match the model")
    eigvals, V = scipy.linalg.eig(A)
    cond = np.linalg.cond(V)
    if cond > 1e12:
        warnings.warn("nearly defective eigenvector basis; amplitudes may be "
                      "inaccurate", RuntimeWarning)
        W = np.linalg.pinv(V)
    else:
        W = np.linalg.inv(V)  # rows are left eigenvectors with w^T v = 1
    dt = model.dt_
    with np.errstate(divide="ignore", invalid="ignore"):
        freqs = np.where(np.abs(eigvals) > 0,
                         np.log(eigvals.astype(complex)).imag / (2 * np.pi * dt),
                         np.nan)
    amps = np.mean(np.abs(W @ data.Gamma), axis=1)
    return EigenmodeReport(eigenvalues=eigvals, frequencies=freqs, amplitudes=amps)
