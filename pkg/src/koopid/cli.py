"""Command-line front end.

    koopid simulate|fit|predict|analyze --config FILE [--model ARCHIVE]
           [--data CSV] [--out DIR] [--seed INT] [--threads INT]

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import analysis as an
from . import simulators as sim
from ._rng import substream
from .config import RunConfig, analysis_params, build_dictionary_spec, load_config
from .dictionary import ObservableSeries, assemble, build_delay_state, eval_lift
from .estimators import (Dmd, Edmdc, NonlinearControlledPredictor,
                         NonlinearPredictor, reduce)
from .exceptions import ConfigError, NumericsError
from .io import FLOAT_FMT, load_model, read_series, save_model, write_series
from .numerics import pod_basis


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit_(f"error: {message}")


class SystemExit_(ConfigError):
    pass


def _write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _make_inputs(cfg: RunConfig, duration: float, dt: float, channels: int):
    """One InputSignal per channel, or None when no [input] table is given."""
    inp = cfg.input
    if inp is None:
        return None
    if "constant" in inp:
        return [sim.constant_input(float(inp["constant"]), duration, dt)
                for _ in range(channels)]
    try:
        spec = sim.InputSignalSpec(lo=float(inp["lo"]), hi=float(inp["hi"]),
                                   hold=float(inp["hold"]), seed=cfg.seed,
                                   duration=float(inp.get("duration", duration)))
    except KeyError as exc:
        raise ConfigError(f"[input] missing key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return [sim.gen_input(spec, dt, rng=substream(cfg.seed, f"input{ch}"))
            for ch in range(channels)]


def cmd_simulate(cfg: RunConfig, out_dir: str) -> int:
    system = cfg.system
    if not system:
        raise ConfigError("simulate requires a [system] table")
    kind = system["kind"]
    if kind == "external-csv":
        raise ConfigError("external-csv datasets are not simulated")
    dt = float(system.get("dt", 0.1))
    duration = float(system.get("duration", 100.0))
    substeps = int(system.get("substeps", 10))

    if kind == "duffing":
        p = sim.DuffingParams(alpha=float(system.get("alpha", 1.0)),
                              beta=float(system.get("beta", -1.0)),
                              delta=float(system.get("delta", 0.5)),
                              dt_sample=dt, substeps=substeps)
        signals = _make_inputs(cfg, duration, dt, 1)
        u = signals[0] if signals else None
        series, _ = sim.simulate_duffing(p, system.get("x0", [0.0, 0.0]), u, duration)
    elif kind == "hopf":
        p = sim.HopfParams(mu=float(system.get("mu", 1.0)),
                           omega=float(system.get("omega", 2 * np.pi / 5)),
                           input_scale=float(system.get("input_scale", 1.0)),
                           dt_sample=dt, substeps=substeps)
        signals = _make_inputs(cfg, duration, dt, 1)
        u = signals[0] if signals else None
        series, _ = sim.simulate_hopf(p, system.get("x0", [0.1, 0.0]), u, duration)
    elif kind == "burgers":
        p = sim.BurgersParams(Re=float(system.get("re", 50.0)),
                              grid_points=int(system.get("grid_points", 64)),
                              dt_sample=dt, substeps=substeps,
                              wmax=float(system.get("wmax", 1.0)))
        signals = _make_inputs(cfg, duration, dt, 2)
        wL, wR = (signals[0], signals[1]) if signals else (None, None)
        w0 = system.get("w0", 0.0)
        if np.isscalar(w0):
            w0 = np.full(p.grid_points, float(w0))
        stations = system.get("stations", 20)
        series, _ = sim.simulate_burgers(p, w0, wL, wR, duration,
                                         n_stations=None if stations == "all" else int(stations))
    else:  # pragma: no cover - kind validated by load_config
        raise ConfigError(f"unknown system kind {kind!r}")

    csv_path = os.path.join(out_dir, "dataset.csv")
    write_series(csv_path, series)
    manifest = {"seed": cfg.seed, "system": system, "input": cfg.input}
    with open(os.path.join(out_dir, "dataset.manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"wrote {csv_path}: {series.m} observables, "
          f"{0 if series.U is None else series.U.shape[0]} inputs, "
          f"{series.n_samples} samples, dt={series.dt}")
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

_FIT_FAMILIES = {
    "dmd": (Dmd, False),
    "edmdc": (Edmdc, True),
    "nonlinear": (NonlinearPredictor, False),
    "nonlinear_controlled": (NonlinearControlledPredictor, True),
}


def _assemble_for_fit(cfg: RunConfig, series: ObservableSeries):
    family = cfg.fit.get("family")
    if family not in _FIT_FAMILIES:
        raise ConfigError("fit requires a [fit] table with a valid family")
    cls, controlled = _FIT_FAMILIES[family]
    q = 0
    if controlled:
        if series.U is None:
            raise ConfigError(f"family {family!r} needs input columns in the dataset")
        q = series.U.shape[0]
    spec = build_dictionary_spec(cfg, series.m, q)
    linear = family in ("dmd", "edmdc")
    augmented = bool(cfg.fit.get("augmented", linear)) and spec.lift is not None
    if augmented and not linear:
        raise ConfigError("augmented states apply to the linear families only")
    try:
        data = assemble(series, spec, augmented=augmented)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cls, data, spec, augmented


def cmd_fit(cfg: RunConfig, data_path: str, out_dir: str) -> int:
    if not data_path:
        raise ConfigError("fit requires --data")
    series = read_series(data_path)
    cls, data, spec, augmented = _assemble_for_fit(cfg, series)
    rank = cfg.fit.get("rank", "full")
    model = cls(rank=rank).fit(data)
    pod_rho = int(cfg.fit.get("pod_rho", 0))
    to_save = model
    if pod_rho > 0:
        if isinstance(model, (Dmd, Edmdc)):
            raise ConfigError("pod_rho applies to the nonlinear families")
        basis = pod_basis(data.Gamma, pod_rho)
        to_save = reduce(model, basis)
    path = os.path.join(out_dir, "model.koop")
    save_model(path, to_save, augmented=augmented)
    print(f"family={cfg.fit['family']} m={spec.m} q={spec.q} z={spec.z} "
          f"state_dim={data.state_dim} lift_dim={data.lift_dim} "
          f"d={data.d} rank={rank} residual={model.residual_:.6e}")
    if pod_rho > 0:
        print(f"reduced to rho={pod_rho} "
              f"(energy fraction {to_save.basis.energy_fraction:.6f})")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def _seed_state(model, series: ObservableSeries, start: int) -> np.ndarray:
    spec = model.spec_
    if spec is None:
        raise ConfigError("archived model carries no dictionary spec")
    if start < spec.z or start >= series.n_samples:
        raise ConfigError(f"start index must be in [{spec.z}, {series.n_samples - 1}]")
    gamma = build_delay_state(series, spec, start)
    if getattr(model, "augmented_", False):
        gamma = np.concatenate([gamma, eval_lift(spec, gamma)])
    return gamma


def cmd_predict(cfg: RunConfig, model_path: str, data_path: str, out_dir: str) -> int:
    if not model_path or not data_path:
        raise ConfigError("predict requires --model and --data")
    model = load_model(model_path)
    series = read_series(data_path)
    params = analysis_params(cfg, "predict")
    spec = model.spec_
    start = int(params.get("start", spec.z if spec else 0))
    steps = int(params.get("steps", 100))
    m = spec.m if spec else series.m
    dx = float(params.get("dx", 1.0 / m if m > 1 else 1.0))
    if start + steps >= series.n_samples:
        raise ConfigError("dataset too short for the requested prediction window")
    gamma0 = _seed_state(model, series, start)
    inputs = None
    if getattr(model, "controlled", False):
        if series.U is None:
            raise ConfigError("controlled model needs input columns in the dataset")
        inputs = series.U[:, start : start + steps]
    res = model.rollout(gamma0, steps, inputs)
    pred = res.states[:m]
    truth = series.Y[:, start : start + steps + 1]
    err = an.l2_error(truth, pred, dx)
    times = (start + np.arange(steps + 1)) * series.dt

    pred_path = os.path.join(out_dir, "prediction.csv")
    _write_csv(pred_path, ["t"] + [f"y{i + 1}" for i in range(m)],
               np.column_stack([times, pred.T]))
    err_path = os.path.join(out_dir, "error.csv")
    _write_csv(err_path, ["t", "l2"], np.column_stack([times, err]))
    if res.diverged:
        print(f"rollout diverged at step {res.diverged_at}")
    print(f"wrote {pred_path} and {err_path} "
          f"(mean L2 over finite steps: {np.nanmean(err):.6e})")
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _cycle_from_config(model, series, params):
    spec = model.spec_
    start = int(params.get("start", spec.z if spec else 0))
    gamma0 = _seed_state(model, series, start)
    return an.find_limit_cycle(
        model, gamma0,
        observable=int(params.get("observable", 0)),
        threshold=float(params.get("threshold", 0.0)),
        transient=int(params.get("transient", 1000)),
        max_steps=int(params.get("max_steps", 20000)),
    )


def cmd_analyze(cfg: RunConfig, model_path: str, data_path: str, out_dir: str,
                threads: int) -> int:
    if not model_path:
        raise ConfigError("analyze requires --model")
    model = load_model(model_path)
    task = cfg.analysis.get("task")
    if not task:
        raise ConfigError("analyze requires [analysis] task")
    params = analysis_params(cfg, task)

    if task == "basins":
        if not getattr(model, "controlled", False):
            raise ConfigError("basin analysis needs a controlled model")
        x1 = params.get("x1", [-2.0, 2.0])
        x2 = params.get("x2", [-2.0, 2.0])
        grid1 = np.linspace(x1[0], x1[1], int(params.get("n1", 41)))
        grid2 = np.linspace(x2[0], x2[1], int(params.get("n2", 41)))
        result = an.basin_map(model, grid1, grid2,
                              u_const=float(params.get("u", 0.0)),
                              horizon=int(params.get("horizon", 3000)),
                              settle_tol=float(params.get("settle_tol", 1e-4)),
                              window=int(params.get("window", an.SETTLE_WINDOW)),
                              threads=threads)
        rows = [(a, b, result.values[i, j])
                for i, a in enumerate(result.x1_axis)
                for j, b in enumerate(result.x2_axis)]
        path = os.path.join(out_dir, "basins.csv")
        _write_csv(path, ["x1", "x2", "label"], rows)
        print(f"wrote {path} ({len(rows)} cells, u={result.u_const})")
        return 0

    if task in ("cycle", "prc"):
        if not data_path:
            raise ConfigError(f"{task} analysis requires --data to seed the state")
        series = read_series(data_path)
        cycle = _cycle_from_config(model, series, params)
        if task == "cycle":
            path = os.path.join(out_dir, "cycle.csv")
            _write_csv(path, ["period", "transient_steps", "converged"],
                       [(cycle.period, cycle.transient_steps, float(cycle.converged))])
            orbit_path = os.path.join(out_dir, "cycle_orbit.csv")
            n = cycle.samples.shape[1]
            _write_csv(orbit_path, ["t"] + [f"s{i + 1}" for i in range(cycle.samples.shape[0])],
                       np.column_stack([np.arange(n) * model.dt_, cycle.samples.T]))
            print(f"wrote {path}: period={cycle.period} converged={cycle.converged}")
            return 0
        if not cycle.converged:
            raise NumericsError("no converged limit cycle; cannot estimate a PRC")
        n_phases = int(params.get("phases", 16))
        phases = np.linspace(0.0, 2 * np.pi, n_phases, endpoint=False)
        prc = an.estimate_prc(model, cycle,
                              magnitude=float(params.get("magnitude", 0.1)),
                              duration=float(params.get("duration", model.dt_ * 5)),
                              phases=phases,
                              settle_cycles=int(params.get("settle_cycles", 20)))
        path = os.path.join(out_dir, "prc.csv")
        _write_csv(path, ["theta", "Z"], prc)
        print(f"wrote {path} ({n_phases} phases, period {cycle.period:.6g})")
        return 0

    if task == "fixed_point":
        if not isinstance(model, (NonlinearPredictor, NonlinearControlledPredictor)):
            raise ConfigError("fixed-point analysis needs a nonlinear model family")
        guess = params.get("guess")
        state, eigvals = an.find_fixed_point(
            model, u_const=float(params.get("u", 0.0)), guess=guess,
            tol=float(params.get("tol", 1e-10)))
        path = os.path.join(out_dir, "fixed_point.csv")
        _write_csv(path, ["index", "value"], list(enumerate(state)))
        eig_path = os.path.join(out_dir, "fixed_point_eigenvalues.csv")
        _write_csv(eig_path, ["re", "im"],
                   np.column_stack([eigvals.real, eigvals.imag]))
        print(f"wrote {path} and {eig_path}")
        return 0

    if task == "spectrum":
        if not isinstance(model, (Dmd, Edmdc)):
            raise ConfigError("spectrum analysis needs a linear model family "
                              "(dmd or edmdc); nonlinear models have no global "
                              "eigenmode decomposition")
        if not data_path:
            raise ConfigError("spectrum analysis requires --data for amplitudes")
        series = read_series(data_path)
        spec = model.spec_
        data = assemble(series, spec, augmented=getattr(model, "augmented_", False))
        report = an.eigenmode_spectrum(model, data).sorted_by_amplitude()
        path = os.path.join(out_dir, "spectrum.csv")
        _write_csv(path, ["re", "im", "frequency", "amplitude"],
                   np.column_stack([report.eigenvalues.real, report.eigenvalues.imag,
                                    report.frequencies, report.amplitudes]))
        print(f"wrote {path} ({report.eigenvalues.size} modes)")
        return 0

    raise ConfigError(f"unknown analysis task {task!r}")  # pragma: no cover


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="koopid",
                     description="Koopman-style nonlinear system identification")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "fit", "predict", "analyze"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--model", default=None)
        p.add_argument("--data", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        threads = args.threads
        if threads is None:
            threads = int(os.environ.get("KOOPID_THREADS", "1"))
        out_dir = args.out or cfg.out_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "fit":
            return cmd_fit(cfg, args.data, out_dir)
        if args.command == "predict":
            return cmd_predict(cfg, args.model, args.data, out_dir)
        return cmd_analyze(cfg, args.model, args.data, out_dir, threads)
    except ConfigError as exc:
        print(f"koopid: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"koopid: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"koopid: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
