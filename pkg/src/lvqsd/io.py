"""Experiment configs, byte-stable JSON/CSV emission and run manifests."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import enum
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from . import __version__
from .errors import ConfigParseError, LVQSDError, ValidationError
from .model import COEFFICIENTS, LVParams, validate_params
from .sde import SimConfig
from .spectral import Grid

OUTPUT_ENV = "LVQSD_OUTPUT_DIR"
DEFAULT_OUTPUT = "lvqsd_runs"

_TOP_KEYS = {"model", "harness", "grid", "grid1d", "sim", "particles", "seed",
             "output_dir", "options"}


# -- plain data --------------------------------------------------------------------

def to_plain(obj: Any) -> Any:
    """Recursively convert results to JSON-ready builtins.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_plain(obj.to_dict())
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Mapping):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps_json(obj: Any) -> str:
    return json.dumps(to_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def canonical_json(obj: Any) -> bytes:
    return json.dumps(to_plain(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode()


def format_number(x) -> str:
    """Shortest round-trip decimal for floats, plain digits for integers."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def dumps_csv(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([format_number(v) for v in row])
    return buf.getvalue()


# -- configs -------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Everything one CLI run needs; validated on construction."""

    model: dict | None = None
    harness: dict | None = None
    grid: dict | None = None
    grid1d: dict | None = None
    sim: dict = field(default_factory=dict)
    particles: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model is not None:
            self.params()
        if self.harness is not None:
            unknown = set(self.harness) - {"dim", "length"}
            if unknown:
                raise ConfigParseError(f"unknown harness options: {sorted(unknown)}")
        for g in (self.grid, self.grid1d):
            if g is not None:
                Grid.from_dict(g)
        self.sim_config()
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigParseError("seed must be a non-negative 64-bit integer")

    def params(self) -> LVParams:
        if self.model is None:
            raise ValidationError("config has no model parameters")
        return validate_params(self.model)

    def sim_config(self) -> SimConfig:
        d = dict(self.sim)
        d.setdefault("seed", self.seed)
        return SimConfig.from_dict(d)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        if not isinstance(d, Mapping):
            raise ConfigParseError("config must be a JSON object")
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigParseError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("model", "harness", "grid", "grid1d"):
            if d.get(key) is not None and not isinstance(d[key], Mapping):
                raise ConfigParseError(f"'{key}' must be an object")
        for key in ("sim", "particles", "options"):
            if d.get(key) is None:
                d.pop(key, None)
            elif not isinstance(d[key], Mapping):
                raise ConfigParseError(f"'{key}' must be an object")
        return cls(**d)

    def to_dict(self) -> dict:
        return json.loads(canonical_json(dataclasses.asdict(self)))

    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict())).hexdigest()


def load_config(path: str | os.PathLike | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"config {path} is not valid JSON: {exc}") from None
    try:
        return ExperimentConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigParseError(str(exc)) from None


def default_model_dict() -> dict:
    """All-ones decoupled coefficients."""
    return {k: (0.0 if k in ("c12", "c21") else 1.0) for k in COEFFICIENTS}


# -- emission -----------------------------------------------------------------------

class IoError(LVQSDError, OSError):
    pass


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        t = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return t.isoformat()


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    config: dict
    seeds: dict
    version: str = __version__
    timestamps: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"artifact_version": self.version, "subcommand": self.subcommand,
                "config_hash": self.config_hash, "config": self.config,
                "seeds": self.seeds, "timestamps": self.timestamps, "files": self.files}


def emit_results(outdir: str | os.PathLike, outputs: Mapping[str, str | bytes],
                 manifest: RunManifest) -> Path:
    """Write ``outputs`` (file name -> text) into ``outdir`` and the manifest last.

    File names must be plain names inside ``outdir``.  Returns the manifest path.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        files = []
        for name in sorted(outputs):
            if Path(name).name != name or name == "manifest.json":
                raise IoError(f"output name {name!r} must be a plain file name")
            data = outputs[name]
            data = data.encode() if isinstance(data, str) else data
            (outdir / name).write_bytes(data)
            files.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(),
                          "bytes": len(data)})
        manifest.files = files
        manifest.timestamps = {"created": _timestamp()}
        path = outdir / "manifest.json"
        path.write_text(dumps_json(manifest.to_dict()))
    except OSError as exc:
        raise IoError(f"cannot write results to {outdir}: {exc}") from None
    return path
