"""File formats, configuration, run manifests and report output."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadConfig, ValidationError
from .p1metric import InvariantMetricP1, metric_from_json
from .polytope import Polytope, polytope_from_json
from .potentials import SymplecticPotential, potential_from_json
from .stability import PLConvexFunction

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

TOOL_VERSION = "0.1.0"


class MalformedJSON(ValidationError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


def read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc


def parse_json_bytes(raw: bytes, source: str = "<input>"):
    """Parse JSON and report failures with the byte offset of the problem."""
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedJSON(f"{source}: invalid UTF-8 at byte offset {exc.start}", exc.start) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise MalformedJSON(f"{source}: malformed JSON at byte offset {offset}: {exc.msg}", offset) from exc


def load_json(path):
    return parse_json_bytes(read_bytes(path), str(path))


def sha256_file(path) -> str:
    return hashlib.sha256(read_bytes(path)).hexdigest()


def load_polytope(path) -> Polytope:
    return polytope_from_json(load_json(path))


def load_pl(path) -> PLConvexFunction:
    return PLConvexFunction.from_json(load_json(path))


def load_metric(path) -> InvariantMetricP1:
    return metric_from_json(load_json(path))


def load_metric_batch(path) -> list:
    """One metric or a JSON array of metrics."""
    data = load_json(path)
    items = data if isinstance(data, list) else [data]
    return [metric_from_json(item) for item in items]


def load_potential(path) -> SymplecticPotential:
    """Potential file whose ``polytope`` is inline or a path relative to the file."""
    data = load_json(path)
    if not isinstance(data, dict) or "polytope" not in data:
        raise ValidationError(f"{path}: potential needs a 'polytope' entry")
    ref = data["polytope"]
    if isinstance(ref, str):
        poly = load_polytope(Path(path).parent / ref)
    else:
        poly = polytope_from_json(ref)
    return potential_from_json(data, poly)


# ---------------------------------------------------------------- configuration


def load_config(path) -> dict:
    """Flat table of option defaults from a TOML or JSON file."""
    raw = read_bytes(path)
    if str(path).endswith(".toml"):
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise BadConfig(f"{path}: {exc}") from exc
    else:
        data = parse_json_bytes(raw, str(path))
    if not isinstance(data, dict):
        raise BadConfig(f"{path}: configuration must be a table")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def canonical_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(params: dict) -> str:
    return hashlib.sha256(canonical_json(params).encode()).hexdigest()


def to_jsonable(obj):
    """Convert numpy scalars and arrays, tuples and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


# ---------------------------------------------------------------- manifests


@dataclass
class RunManifest:
    """Everything needed to reproduce one command's output."""

    command: list
    parameters: dict
    inputs: dict = field(default_factory=dict)
    seed: int = 0
    tool_version: str = TOOL_VERSION

    @property
    def timestamp(self):
        # reproducible builds convention; absent means no timestamp
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        return int(epoch) if epoch and epoch.isdigit() else None

    def to_json(self) -> dict:
        return {
            "command": list(self.command),
            "config_hash": config_hash(self.parameters),
            "inputs": dict(sorted(self.inputs.items())),
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
            "parameters": to_jsonable(self.parameters),
            "seed": self.seed,
        }


def manifest_for(argv, params: dict, input_paths, seed: int = 0) -> RunManifest:
    inputs = {str(p): sha256_file(p) for p in input_paths}
    return RunManifest(list(argv), params, inputs, seed)


# ---------------------------------------------------------------- output


def dumps(report) -> str:
    return json.dumps(to_jsonable(report), indent=2, sort_keys=True) + "\n"


def write_text(text: str, out=None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(out).write_text(text)


def write_csv(rows: list, path) -> None:
    """Rows of dicts sharing keys; the header follows the first row's key order."""
    if not rows:
        Path(path).write_text("")
        return
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: to_jsonable(v) for k, v in row.items()})
    Path(path).write_text(buf.getvalue())
