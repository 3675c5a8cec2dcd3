"""Run configuration: a TOML document with one table per pipeline stage.

Sections: [system] (which simulator or external CSV), [input] (smoothed
random input signal), [dictionary] (delay depth and lifting), [fit]
(model family, truncation rank, optional POD order), [analysis]
(task-specific tables), [output]; plus a top-level integer ``seed``.
Unknown keys are rejected.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from ._rng import substream
from .dictionary import (ComposedLift, DictionarySpec, PolynomialLift, RbfLift,
                         sample_rbf_centers)
from .exceptions import ConfigError

_TOP_KEYS = {"seed", "system", "input", "dictionary", "fit", "analysis", "output"}
_SYSTEM_KEYS = {
    "duffing": {"kind", "alpha", "beta", "delta", "dt", "substeps", "duration", "x0"},
    "burgers": {"kind", "re", "grid_points", "dt", "substeps", "duration", "w0",
                "stations", "wmax"},
    "hopf": {"kind", "mu", "omega", "input_scale", "dt", "substeps", "duration", "x0"},
    "external-csv": {"kind", "path"},
}
_INPUT_KEYS = {"lo", "hi", "hold", "duration", "constant", "channels"}
_DICT_KEYS = {"z", "kind", "min_degree", "max_degree", "scope", "n_centers",
              "center_lo", "center_hi"}
_FIT_KEYS = {"family", "rank", "pod_rho", "augmented"}
_OUTPUT_KEYS = {"dir"}
_ANALYSIS_TASKS = {"basins", "predict", "cycle", "prc", "fixed_point", "spectrum"}
_ANALYSIS_KEYS = {
    "basins": {"x1", "x2", "n1", "n2", "u", "horizon", "settle_tol", "window"},
    "predict": {"start", "steps", "dx"},
    "cycle": {"observable", "threshold", "transient", "max_steps", "start"},
    "prc": {"magnitude", "duration", "phases", "settle_cycles",
            "observable", "threshold", "transient", "max_steps", "start"},
    "fixed_point": {"u", "guess", "tol"},
    "spectrum": {},
}
_FAMILIES = {"dmd", "edmdc", "nonlinear", "nonlinear_controlled"}


@dataclass
class RunConfig:
    """Validated configuration document."""

    seed: int = 0
    system: dict = field(default_factory=dict)
    input: Optional[dict] = None
    dictionary: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @property
    def out_dir(self) -> str:
        return self.output.get("dir", ".")


def _check_keys(table: dict, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")


def load_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _check_keys(doc, _TOP_KEYS, "top level")

    system = doc.get("system", {})
    kind = system.get("kind")
    if system:
        if kind not in _SYSTEM_KEYS:
            raise ConfigError(f"[system] kind must be one of {sorted(_SYSTEM_KEYS)}")
        _check_keys(system, _SYSTEM_KEYS[kind], "system")
        if kind == "external-csv" and not os.path.exists(system.get("path", "")):
            raise ConfigError(f"[system] path does not exist: {system.get('path')}")

    inp = doc.get("input")
    if inp is not None:
        _check_keys(inp, _INPUT_KEYS, "input")

    dictionary = doc.get("dictionary", {})
    if dictionary:
        _check_keys(dictionary, _DICT_KEYS, "dictionary")
        dk = dictionary.get("kind", "none")
        if dk not in {"none", "polynomial", "rbf", "composed"}:
            raise ConfigError(f"[dictionary] kind {dk!r} not recognized")

    fit = doc.get("fit", {})
    if fit:
        _check_keys(fit, _FIT_KEYS, "fit")
        fam = fit.get("family")
        if fam not in _FAMILIES:
            raise ConfigError(f"[fit] family must be one of {sorted(_FAMILIES)}")
        rank = fit.get("rank", "full")
        if rank != "full" and (not isinstance(rank, int) or rank < 1):
            raise ConfigError("[fit] rank must be a positive integer or 'full'")

    analysis = doc.get("analysis", {})
    if analysis:
        task = analysis.get("task")
        if task not in _ANALYSIS_TASKS:
            raise ConfigError(f"[analysis] task must be one of {sorted(_ANALYSIS_TASKS)}")
        _check_keys(analysis, {"task"} | _ANALYSIS_TASKS, "analysis")
        for name in _ANALYSIS_TASKS:
            if name in analysis:
                _check_keys(analysis[name], _ANALYSIS_KEYS[name], f"analysis.{name}")

    output = doc.get("output", {})
    if output:
        _check_keys(output, _OUTPUT_KEYS, "output")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    return RunConfig(seed=seed, system=system, input=inp, dictionary=dictionary,
                     fit=fit, analysis=analysis, output=output)


def build_dictionary_spec(cfg: RunConfig, m: int, q: int) -> DictionarySpec:
    """Instantiate the dictionary from config for data with dims (m, q).

    RBF centers, when requested, are drawn from the seeded 'centers'
    substream inside the configured box.
    """
    d = cfg.dictionary
    z = int(d.get("z", 0))
    kind = d.get("kind", "none")
    lift = None
    if kind == "polynomial":
        lift = PolynomialLift(int(d.get("min_degree", 2)), int(d.get("max_degree", 2)),
                              scope=d.get("scope", "all"))
    elif kind in ("rbf", "composed"):
        n_centers = d.get("n_centers")
        if n_centers is None:
            raise ConfigError("[dictionary] rbf/composed liftings need n_centers")
        lo = d.get("center_lo", -1.0)
        hi = d.get("center_hi", 1.0)
        rng = substream(cfg.seed, "centers")
        centers = sample_rbf_centers(m, int(n_centers), lo, hi, rng)
        if kind == "rbf":
            lift = RbfLift(centers)
        else:
            lift = ComposedLift(centers, int(d.get("min_degree", 2)),
                                int(d.get("max_degree", 2)))
    try:
        return DictionarySpec(m=m, q=q, z=z, lift=lift)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def analysis_params(cfg: RunConfig, task: str) -> dict[str, Any]:
    params = dict(cfg.analysis.get(task, {}))
    return params
