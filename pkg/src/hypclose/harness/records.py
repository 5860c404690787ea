"""Newline-delimited records: 'type=<tag> config_hash=... seed=... key=<json> ...'.

Values are compact JSON, so each line parses back to the same fields and
serializes to the same bytes.
"""

import json
from dataclasses import dataclass, field

import numpy as np

RECORD_TYPES = ("certificate", "spectrum", "entropy", "coding", "budget", "chart", "error")
_DUMP = json.JSONEncoder(separators=(",", ":"), allow_nan=True, ensure_ascii=True)
_LOAD = json.JSONDecoder()


class RecordError(ValueError):
    pass


def to_plain(v):
    """Convert numpy values, complex numbers and tuples to JSON-ready objects."""
    if isinstance(v, dict):
        return {str(k): to_plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [to_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return to_plain(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if v is None or isinstance(v, str):
        return v
    raise RecordError(f"cannot serialize {type(v).__name__}")


@dataclass
class RecordLine:
    type: str
    payload: dict = field(default_factory=dict)
    config_hash: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.type not in RECORD_TYPES:
            raise RecordError(f"unknown record type {self.type!r}")
        self.payload = to_plain(self.payload)
        for k in self.payload:
            if not k.isidentifier() or k in ("type", "config_hash", "seed"):
                raise RecordError(f"bad field name {k!r}")

    def serialize(self):
        parts = [f"type={self.type}", f"config_hash={self.config_hash}", f"seed={self.seed}"]
        parts += [f"{k}={_DUMP.encode(v)}" for k, v in self.payload.items()]
        return " ".join(parts)


def _word(line, pos):
    end = line.find(" ", pos)
    end = len(line) if end < 0 else end
    return line[pos:end], end


def parse_record(line):
    line = line.rstrip("\n")
    head = {}
    pos = 0
    for key in ("type", "config_hash", "seed"):
        prefix = key + "="
        if not line.startswith(prefix, pos):
            raise RecordError(f"expected {prefix!r} at column {pos}")
        head[key], pos = _word(line, pos + len(prefix))
        pos += 1
    payload = {}
    while pos < len(line):
        eq = line.find("=", pos)
        if eq < 0:
            raise RecordError(f"missing '=' after column {pos}")
        key = line[pos:eq]
        try:
            payload[key], end = _LOAD.raw_decode(line, eq + 1)
        except json.JSONDecodeError as exc:
            raise RecordError(f"bad value for {key}: {exc}") from None
        if end < len(line) and line[end] != " ":
            raise RecordError(f"junk after value of {key}")
        pos = end + 1
    return RecordLine(head["type"], payload, head["config_hash"], int(head["seed"]))


def read_records(path):
    with open(path) as fh:
        return [parse_record(line) for line in fh if line.strip()]


class RecordSink:
    """Single writer for all records of a run (stdout when path is '-')."""

    def __init__(self, path, config_hash, seed):
        self.path, self.config_hash, self.seed = path, config_hash, seed
        self.lines = []

    def emit(self, type_, **payload):
        rec = RecordLine(type_, payload, self.config_hash, self.seed)
        self.lines.append(rec.serialize())
        return rec

    def flush(self, stream=None):
        text = "".join(line + "\n" for line in self.lines)
        if self.path == "-":
            if stream is not None:
                stream.write(text)
        else:
            with open(self.path, "w") as fh:
                fh.write(text)
