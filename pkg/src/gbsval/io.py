"""File formats: interferometer JSON, NDJSON tables and sample sets, CSV exports.

Everything is written with sorted keys and no timestamps, so identical
inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import GBSError, InvalidInputError
from .gaussian import Interferometer
from .oracle import ProbabilityTable
from .samplers import SampleSet


class FileFormatError(GBSError, OSError):
    """Unreadable, unwritable or malformed file."""

    exit_code = 5


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj: Any, indent: int | None = None) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=indent, allow_nan=True)


def config_hash(config: dict) -> str:
    """Short SHA-256 of the canonical JSON form of ``config``."""
    return hashlib.sha256(dumps(config).encode()).hexdigest()[:16]


def _write(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise FileFormatError(f"cannot write {path}: {exc}") from exc
    return path


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text().splitlines()
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc


def _loads(line: str, path) -> dict:
    try:
        return json.loads(line)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"malformed JSON in {path}: {exc}") from exc


# --------------------------------------------------------------------------
# Interferometer
# --------------------------------------------------------------------------
def interferometer_to_json(itf: Interferometer) -> str:
    T = np.asarray(itf.T)
    rows = [[[float(z.real), float(z.imag)] for z in row] for row in T]
    return dumps({"m": itf.m, "seed": itf.seed, "T": rows}, indent=None) + "\n"


def save_interferometer(itf: Interferometer, path) -> Path:
    return _write(path, interferometer_to_json(itf))


def load_interferometer(path) -> Interferometer:
    lines = _read_lines(path)
    data = _loads("\n".join(lines), path)
    try:
        T = np.array([[complex(re, im) for re, im in row] for row in data["T"]])
        if T.shape != (data["m"], data["m"]):
            raise InvalidInputError(f"interferometer file {path} declares m={data['m']} but holds {T.shape}")
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad interferometer file {path}: {exc}") from exc
    return Interferometer(T, data.get("seed"))


# --------------------------------------------------------------------------
# Probability tables
# --------------------------------------------------------------------------
def table_to_ndjson(table: ProbabilityTable, header: dict | None = None) -> str:
    head = {
        "type": "probability_table",
        "m": table.m,
        "n_cutoff": table.n_cutoff,
        "cutoffs": list(table.cutoffs),
        "zero_excluded": table.zero_excluded,
        "normalized": table.normalized,
        "truncation_deficit": table.truncation_deficit,
        **(header or {}),
    }
    lines = [dumps(head)]
    lines += [dumps({"s": list(s), "p": p}) for s, p in table.items()]
    return "\n".join(lines) + "\n"


def save_table(table: ProbabilityTable, path, header: dict | None = None) -> Path:
    return _write(path, table_to_ndjson(table, header))


def load_table(path) -> tuple[ProbabilityTable, dict]:
    lines = _read_lines(path)
    if not lines:
        raise FileFormatError(f"empty table file {path}")
    head = _loads(lines[0], path)
    if head.get("type") != "probability_table":
        raise FileFormatError(f"{path} is not a probability table")
    probs = np.zeros([c + 1 for c in head["cutoffs"]])
    for line in lines[1:]:
        rec = _loads(line, path)
        probs[tuple(rec["s"])] = rec["p"]
    table = ProbabilityTable(probs, head["zero_excluded"], head["normalized"], head["truncation_deficit"])
    return table, head


# --------------------------------------------------------------------------
# Sample sets
# --------------------------------------------------------------------------
def sampleset_header(samples: SampleSet, extra: dict | None = None) -> dict:
    return {
        "type": "sample_set",
        "model": samples.model,
        "params": samples.params,
        "seed": samples.seed,
        "m": samples.m,
        "n_cutoff": samples.n_cutoff,
        "n_samples": len(samples),
        "partition": samples.partition,
        **(extra or {}),
    }


def sampleset_to_ndjson(samples: SampleSet, header: dict | None = None) -> str:
    lines = [dumps(sampleset_header(samples, header))]
    lines += ['{"s": [' + ", ".join(str(int(x)) for x in row) + "]}" for row in samples.patterns]
    return "\n".join(lines) + "\n"


def save_samples(samples: SampleSet, path, header: dict | None = None) -> Path:
    return _write(path, sampleset_to_ndjson(samples, header))


def load_samples(path) -> tuple[SampleSet, dict]:
    lines = _read_lines(path)
    if not lines:
        raise FileFormatError(f"empty sample file {path}")
    head = _loads(lines[0], path)
    if head.get("type") != "sample_set":
        raise FileFormatError(f"{path} is not a sample set")
    rows = [_loads(line, path)["s"] for line in lines[1:] if line.strip()]
    pats = np.array(rows, dtype=np.int64).reshape(len(rows), head["m"])
    if len(rows) != head.get("n_samples", len(rows)):
        raise FileFormatError(f"{path} declares {head['n_samples']} samples but holds {len(rows)}")
    s = SampleSet(pats, head["model"], head.get("params", {}), head.get("seed"), head.get("n_cutoff"),
                  head.get("partition"))
    return s, head


def samples_to_csv(samples: SampleSet, path) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"s{i + 1}" for i in range(samples.m)])
    w.writerows(samples.patterns.tolist())
    return _write(path, buf.getvalue())


def rows_to_csv(rows: Iterable[dict], path, columns: list[str] | None = None) -> Path:
    rows = list(rows)
    if columns is None:
        columns = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _jsonable(r.get(k, "")) for k in columns})
    return _write(path, buf.getvalue())


def save_json(obj: Any, path) -> Path:
    return _write(path, dumps(obj, indent=2) + "\n")


def load_json(path) -> Any:
    return _loads("\n".join(_read_lines(path)), path)
