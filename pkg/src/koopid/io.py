"""Dataset CSV and model-archive serialization.

Trajectory CSV: header ``t,y1..ym[,u1..uq]``, one row per sample, floats
printed with 17 significant digits (lossless for 64-bit floats).

Model archive: a single binary file holding a JSON manifest followed by
named numeric arrays.  Each array is prefixed with (rows, cols) as two
little-endian uint64 and stored as little-endian float64 in column-major
order.  The manifest records the model family, dictionary spec, dims, dt,
fit rank, and the monomial-order version; loading rejects archives written
under a different monomial order.
"""
from __future__ import annotations

import json
import struct
from typing import Optional

import numpy as np

from .dictionary import (ComposedLift, DictionarySpec, MONOMIAL_ORDER_VERSION,
                         ObservableSeries, PolynomialLift, RbfLift)
from .estimators import (Dmd, Edmdc, NonlinearControlledPredictor,
                         NonlinearPredictor, ReducedModel)
from .numerics import FULL_RANK, PodBasis

ARCHIVE_MAGIC = b"KOOPIDA1"
FLOAT_FMT = "%.17g"

_FAMILIES = {
    "linear": Dmd,
    "linear_controlled": Edmdc,
    "nonlinear": NonlinearPredictor,
    "nonlinear_controlled": NonlinearControlledPredictor,
}


# ---------------------------------------------------------------------------
# CSV series
# ---------------------------------------------------------------------------

def write_series(path, series: ObservableSeries) -> None:
    m = series.m
    q = 0 if series.U is None else series.U.shape[0]
    header = ["t"] + [f"y{i + 1}" for i in range(m)] + [f"u{i + 1}" for i in range(q)]
    cols = [np.arange(series.n_samples) * series.dt, *series.Y]
    if series.U is not None:
        cols.extend(series.U)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def read_series(path) -> ObservableSeries:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if header[0] != "t":
        raise ValueError(f"{path}: expected a 't' column first, got {header[0]!r}")
    m = sum(1 for name in header if name.startswith("y"))
    q = sum(1 for name in header if name.startswith("u"))
    if 1 + m + q != len(header):
        raise ValueError(f"{path}: unrecognized columns in header {header}")
    t = data[:, 0]
    steps = np.diff(t)
    if steps.size == 0:
        raise ValueError(f"{path}: need at least two samples")
    dt = float(steps[0])
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ValueError(f"{path}: time column is not uniformly sampled")
    Y = data[:, 1 : 1 + m].T
    U = data[:, 1 + m :].T if q else None
    return ObservableSeries(Y=np.ascontiguousarray(Y),
                            U=None if U is None else np.ascontiguousarray(U), dt=dt)


# ---------------------------------------------------------------------------
# archive primitives
# ---------------------------------------------------------------------------

def _write_array(fh, arr: np.ndarray) -> None:
    a = np.asarray(arr, dtype="<f8")
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
    fh.write(np.asfortranarray(a).tobytes(order="F"))


def _read_array(fh) -> np.ndarray:
    rows, cols = struct.unpack("<QQ", fh.read(16))
    buf = fh.read(rows * cols * 8)
    if len(buf) != rows * cols * 8:
        raise ValueError("truncated archive")
    return np.frombuffer(buf, dtype="<f8").reshape((rows, cols), order="F").copy()


def _lift_manifest(lift) -> Optional[dict]:
    if lift is None:
        return None
    if isinstance(lift, PolynomialLift):
        return {"kind": "polynomial", "min_degree": lift.min_degree,
                "max_degree": lift.max_degree, "scope": lift.scope}
    if isinstance(lift, RbfLift):
        return {"kind": "rbf"}
    if isinstance(lift, ComposedLift):
        return {"kind": "composed", "min_degree": lift.min_degree,
                "max_degree": lift.max_degree}
    raise TypeError(f"unknown lifting {lift!r}")


def _lift_from_manifest(entry, centers) -> object:
    if entry is None:
        return None
    kind = entry["kind"]
    if kind == "polynomial":
        return PolynomialLift(entry["min_degree"], entry["max_degree"], entry["scope"])
    if kind == "rbf":
        return RbfLift(centers)
    if kind == "composed":
        return ComposedLift(centers, entry["min_degree"], entry["max_degree"])
    raise ValueError(f"unknown lifting kind {kind!r}")


def _spec_manifest(spec: Optional[DictionarySpec]) -> Optional[dict]:
    if spec is None:
        return None
    return {"m": spec.m, "q": spec.q, "z": spec.z,
            "pre_lift": _lift_manifest(spec.pre_lift),
            "lift": _lift_manifest(spec.lift)}


def _spec_center_arrays(spec: Optional[DictionarySpec]) -> dict:
    arrays = {}
    if spec is None:
        return arrays
    for name, lift in (("pre_lift_centers", spec.pre_lift), ("lift_centers", spec.lift)):
        if isinstance(lift, (RbfLift, ComposedLift)):
            arrays[name] = lift.centers
    return arrays


def _spec_from_manifest(entry, arrays) -> Optional[DictionarySpec]:
    if entry is None:
        return None
    pre = _lift_from_manifest(entry["pre_lift"], arrays.get("pre_lift_centers"))
    lift = _lift_from_manifest(entry["lift"], arrays.get("lift_centers"))
    return DictionarySpec(m=entry["m"], q=entry["q"], z=entry["z"],
                          pre_lift=pre, lift=lift)


# ---------------------------------------------------------------------------
# model archive
# ---------------------------------------------------------------------------

def _family_of(model) -> str:
    for name, cls in _FAMILIES.items():
        if type(model) is cls:
            return name
    if isinstance(model, ReducedModel):
        return "reduced_controlled" if model.controlled else "reduced"
    raise TypeError(f"cannot archive model of type {type(model).__name__}")


def save_model(path, model, *, augmented: bool = False) -> None:
    """Serialize a fitted model (or ReducedModel) to a single archive file."""
    family = _family_of(model)
    arrays: dict[str, np.ndarray] = {}
    manifest = {
        "format": "koopid-model",
        "version": 1,
        "monomial_order": MONOMIAL_ORDER_VERSION,
        "family": family,
        "dt": model.dt_,
        "augmented": augmented,
        "spec": _spec_manifest(model.spec_),
    }
    if isinstance(model, ReducedModel):
        arrays["Phi"] = model.basis.Phi
        arrays["eigenvalues"] = model.basis.eigenvalues
        manifest["energy_fraction"] = model.basis.energy_fraction
        arrays["A"] = model.Ared
        arrays["C"] = model.Cred
        if model.Bred is not None:
            arrays["B"] = model.Bred
    else:
        rank = getattr(model, "rank", FULL_RANK)
        manifest["fit_rank"] = rank if rank == FULL_RANK else int(rank)
        manifest["residual"] = getattr(model, "residual_", None)
        arrays["A"] = model.A_
        if hasattr(model, "B_"):
            arrays["B"] = model.B_
        if hasattr(model, "C_"):
            arrays["C"] = model.C_
    arrays.update(_spec_center_arrays(model.spec_))
    manifest["arrays"] = list(arrays)
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in manifest["arrays"]:
            _write_array(fh, arrays[name])


def load_model(path):
    """Load a model archive; returns the fitted estimator or ReducedModel."""
    with open(path, "rb") as fh:
        magic = fh.read(len(ARCHIVE_MAGIC))
        if magic != ARCHIVE_MAGIC:
            raise ValueError(f"{path}: not a model archive")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(blob_len).decode("utf-8"))
        if manifest.get("monomial_order") != MONOMIAL_ORDER_VERSION:
            raise ValueError(
                f"{path}: archive uses monomial order "
                f"{manifest.get('monomial_order')!r}, this build expects "
                f"{MONOMIAL_ORDER_VERSION!r}"
            )
        arrays = {name: _read_array(fh) for name in manifest["arrays"]}

    spec = _spec_from_manifest(manifest["spec"], arrays)
    family = manifest["family"]
    dt = manifest["dt"]
    if family in ("reduced", "reduced_controlled"):
        basis = PodBasis(Phi=arrays["Phi"], eigenvalues=arrays["eigenvalues"].ravel(),
                         energy_fraction=manifest["energy_fraction"])
        return ReducedModel(basis, arrays["A"], arrays["C"], arrays.get("B"),
                            spec=spec, dt=dt)
    cls = _FAMILIES[family]
    rank = manifest["fit_rank"]
    model = cls(rank=rank if rank == FULL_RANK else int(rank))
    model.A_ = arrays["A"]
    if "B" in arrays and family.endswith("controlled"):
        model.B_ = arrays["B"]
    if "C" in arrays:
        model.C_ = arrays["C"]
    model.spec_ = spec
    model.dt_ = dt
    model.state_dim_ = model.A_.shape[0]
    model.lift_dim_ = arrays["C"].shape[1] if "C" in arrays else 0
    if manifest.get("residual") is not None:
        model.residual_ = manifest["residual"]
    model.augmented_ = bool(manifest.get("augmented", False))
    return model
