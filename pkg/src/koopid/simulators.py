"""Reference dynamical systems used to generate training and validation data.

All integrators are fixed-step classical RK4 with a configurable number of
substeps per recorded sample, for reproducibility.  Input signals are
piecewise-constant uniform draws smoothed by a natural cubic spline through
the segment-midpoint knots.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .dictionary import ObservableSeries
from .exceptions import NumericsError
from .validation import check_count, check_vector


# ---------------------------------------------------------------------------
# input signals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InputSignalSpec:
    """Uniform knot draws in ``[lo, hi]``, one per ``hold``-long segment."""

    lo: float
    hi: float
    hold: float
    seed: int
    duration: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if not self.hold > 0:
            raise ValueError("hold must be positive")
        if self.duration < 2 * self.hold:
            raise ValueError("duration must cover at least two hold segments")


class InputSignal:
    """A sampled input with a smooth evaluator for substep integration."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], times: np.ndarray,
                 knot_times: Optional[np.ndarray] = None,
                 knots: Optional[np.ndarray] = None):
        self._fn = fn
        self.times = times
        self.samples = np.asarray(fn(times), dtype=float)
        self.knot_times = knot_times
        self.knots = knots

    def __call__(self, t):
        return self._fn(t)


def gen_input(spec: InputSignalSpec, dt: float, rng: Optional[np.random.Generator] = None) -> InputSignal:
    """Smoothed piecewise-random signal sampled every ``dt`` over the duration.

    Knot values are drawn per segment and placed at segment midpoints; a
    natural cubic spline through the knots supplies the signal, so spline
    overshoot beyond ``[lo, hi]`` is possible.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n_seg = int(np.ceil(spec.duration / spec.hold)) + 1
    knot_times = (np.arange(n_seg) + 0.5) * spec.hold
    knots = rng.uniform(spec.lo, spec.hi, size=n_seg)
    spline = CubicSpline(knot_times, knots, bc_type="natural", extrapolate=True)
    n = int(round(spec.duration / dt))
    times = np.arange(n + 1) * dt
    return InputSignal(spline, times, knot_times=knot_times, knots=knots)


def constant_input(value: float, duration: float, dt: float) -> InputSignal:
    """Constant signal; the seed-independent degenerate case of gen_input."""
    n = int(round(duration / dt))
    times = np.arange(n + 1) * dt
    return InputSignal(lambda t: np.full_like(np.asarray(t, dtype=float), value), times)


def _as_callable(u) -> Callable[[float], float]:
    if u is None:
        return lambda t: 0.0
    if callable(u):
        return u
    value = float(u)
    return lambda t: value


def _sample(u: Callable, times: np.ndarray) -> np.ndarray:
    """Evaluate a (possibly scalar-valued) signal on a time grid."""
    return np.broadcast_to(np.asarray(u(times), dtype=float), times.shape).copy()


# ---------------------------------------------------------------------------
# RK4 core
# ---------------------------------------------------------------------------

def _rk4_step(f, x, t, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(f, x0: np.ndarray, n_samples: int, dt_sample: float, substeps: int) -> np.ndarray:
    """Integrate and record ``n_samples + 1`` states at ``dt_sample`` spacing."""
    x = np.array(x0, dtype=float)
    out = np.empty(x.shape + (n_samples + 1,))
    out[..., 0] = x
    h = dt_sample / substeps
    for i in range(n_samples):
        t = i * dt_sample
        for s in range(substeps):
            x = _rk4_step(f, x, t + s * h, h)
        if not np.all(np.isfinite(x)):
            raise NumericsError(f"state became non-finite at sample {i + 1}")
        out[..., i + 1] = x
    return out


# ---------------------------------------------------------------------------
# forced Duffing oscillator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DuffingParams:
    """Forced Duffing oscillator; defaults give two stable wells at x1 = +-1."""

    alpha: float = 1.0
    beta: float = -1.0
    delta: float = 0.5
    dt_sample: float = 0.1
    substeps: int = 10

    def __post_init__(self):
        if not self.dt_sample > 0:
            raise ValueError("dt_sample must be positive")
        check_count(self.substeps, "substeps")


def duffing_rhs(p: DuffingParams, u: Callable[[float], float]):
    """Vector field ``x1' = x2, x2' = u - delta x2 + alpha x1 + beta x1^3``.

    With the default coefficients this is the bistable double well: an
    unstable equilibrium at the origin and stable equilibria at x1 = +-1.
    Works on a single state (2,) or a batch (2, n).
    """

    def f(t, x):
        x1, x2 = x[0], x[1]
        return np.stack([x2, u(t) - p.delta * x2 + p.alpha * x1 + p.beta * x1**3])

    return f


def simulate_duffing(p: DuffingParams, x0, input=None, T: float = 100.0):
    """Simulate and observe ``x1``; returns (series, full 2xN state matrix)."""
    x0 = check_vector(x0, "x0", length=2)
    u = _as_callable(input)
    n = int(round(T / p.dt_sample))
    states = rk4_integrate(duffing_rhs(p, u), x0, n, p.dt_sample, p.substeps)
    times = np.arange(n + 1) * p.dt_sample
    U = None if input is None else _sample(u, times).reshape(1, -1)
    series = ObservableSeries(Y=states[0:1], U=U, dt=p.dt_sample)
    return series, states


# ---------------------------------------------------------------------------
# 1-D Burgers equation with Dirichlet boundary control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BurgersParams:
    """Viscous Burgers on [0, 1] with controlled Dirichlet endpoints.

    The substep size must satisfy a CFL-style bound
    ``h <= safety * min(dx^2 Re / 2, dx / wmax)`` with safety 0.5; ``wmax``
    is the assumed solution bound used for the convective part of the check.
    """

    Re: float = 50.0
    grid_points: int = 64
    dt_sample: float = 0.1
    substeps: int = 32
    wmax: float = 1.0

    def __post_init__(self):
        if not self.Re > 0:
            raise ValueError("Re must be positive")
        check_count(self.grid_points, "grid_points", minimum=8)
        if not self.dt_sample > 0:
            raise ValueError("dt_sample must be positive")
        check_count(self.substeps, "substeps")
        h = self.dt_sample / self.substeps
        bound = 0.5 * min(self.dx**2 * self.Re / 2.0, self.dx / self.wmax)
        if h > bound:
            raise ValueError(
                f"substep {h:.3g} violates stability bound {bound:.3g}; "
                f"increase substeps to >= {int(np.ceil(self.dt_sample / bound))}"
            )

    @property
    def dx(self) -> float:
        return 1.0 / (self.grid_points - 1)


def observation_indices(grid_points: int, n_stations: int = 20) -> np.ndarray:
    """Nearest grid index for each station x = 0, 1/n, ..., (n-1)/n."""
    stations = np.arange(n_stations) / n_stations
    return np.rint(stations * (grid_points - 1)).astype(int)


def simulate_burgers(p: BurgersParams, w0, wL=None, wR=None, T: float = 100.0,
                     n_stations: int = 20):
    """Simulate with central differences on a uniform grid.

    Observables are the ``n_stations`` equispaced samples of the field
    (``n_stations=None`` returns every grid point); inputs are the two
    boundary signals.  Returns (series, full grid state matrix).
    """
    w0 = check_vector(w0, "w0", length=p.grid_points)
    uL, uR = _as_callable(wL), _as_callable(wR)
    nu = 1.0 / p.Re
    dx = p.dx

    def f(t, w):
        w = w.copy()
        w[0] = uL(t)
        w[-1] = uR(t)
        dwdt = np.zeros_like(w)
        interior = slice(1, -1)
        dwdt[interior] = (
            nu * (w[2:] - 2.0 * w[1:-1] + w[:-2]) / dx**2
            - w[1:-1] * (w[2:] - w[:-2]) / (2.0 * dx)
        )
        return dwdt

    n = int(round(T / p.dt_sample))
    states = rk4_integrate(f, w0, n, p.dt_sample, p.substeps)
    times = np.arange(n + 1) * p.dt_sample
    # pin recorded boundary values to the inputs
    states[0, :] = _sample(uL, times)
    states[-1, :] = _sample(uR, times)
    if n_stations is None:
        Y = states
    else:
        Y = states[observation_indices(p.grid_points, n_stations)]
    U = None
    if wL is not None or wR is not None:
        U = np.vstack([_sample(uL, times), _sample(uR, times)])
    series = ObservableSeries(Y=Y, U=U, dt=p.dt_sample)
    return series, states


# ---------------------------------------------------------------------------
# Hopf normal form (synthetic limit-cycle testbed)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HopfParams:
    """Normal-form oscillator with a stable cycle of radius sqrt(mu)."""

    mu: float = 1.0
    omega: float = 2.0 * np.pi / 5.0
    input_scale: float = 1.0
    dt_sample: float = 0.05
    substeps: int = 4

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive for a limit cycle")
        if not self.dt_sample > 0:
            raise ValueError("dt_sample must be positive")
        check_count(self.substeps, "substeps")


def hopf_rhs(p: HopfParams, u: Callable[[float], float]):
    """``x' = mu x - omega y - x r^2 + scale*u, y' = omega x + mu y - y r^2``."""

    def f(t, x):
        xx, yy = x[0], x[1]
        r2 = xx**2 + yy**2
        return np.stack([
            p.mu * xx - p.omega * yy - xx * r2 + p.input_scale * u(t),
            p.omega * xx + p.mu * yy - yy * r2,
        ])

    return f


def simulate_hopf(p: HopfParams, x0, input=None, T: float = 100.0):
    """Simulate and observe ``x``; returns (series, full 2xN state matrix)."""
    x0 = check_vector(x0, "x0", length=2)
    u = _as_callable(input)
    n = int(round(T / p.dt_sample))
    states = rk4_integrate(hopf_rhs(p, u), x0, n, p.dt_sample, p.substeps)
    times = np.arange(n + 1) * p.dt_sample
    U = None if input is None else _sample(u, times).reshape(1, -1)
    series = ObservableSeries(Y=states[0:1], U=U, dt=p.dt_sample)
    return series, states


def hopf_stepper(p: HopfParams):
    """One-sample-step map for the Hopf system with a constant input value.

    Returns ``step(state, u) -> state`` advancing one ``dt_sample``; useful
    for applying model-analysis procedures to the true system.
    """
    h = p.dt_sample / p.substeps

    def step(state, u=None):
        val = 0.0 if u is None else float(np.asarray(u).ravel()[0])
        f = hopf_rhs(p, lambda t: val)
        x = np.asarray(state, dtype=float)
        for _ in range(p.substeps):
            x = _rk4_step(f, x, 0.0, h)
        return x

    return step
