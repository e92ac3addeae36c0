"""Batch orchestration: config validation, deterministic parallel
execution over replicate blocks, and CSV/JSON persistence.

Determinism contract: a validated config plus master seed fully determines
every emitted data byte.  Work is split into fixed-size replicate blocks;
each block draws from its own counter-based stream keyed by
(cell, block, role) under the master seed, workers may execute blocks in
any order, and reduction always runs in task order.  Worker count and
scheduling therefore never change results.  The only nondeterministic
output field is "wall_time_s" in the JSON summary.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import multiprocessing
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .experiments import EXPERIMENTS

SCHEMA_VERSION = 1


def validate_config(raw: dict) -> tuple[dict, list[str]]:
    """Validate and canonicalize a raw config dict.

    Returns (canonical config, regime warnings).  Canonical configs
    round-trip: validate(canonical) == canonical.
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment",
                          f"unknown experiment {experiment!r}; "
                          f"expected one of {sorted(EXPERIMENTS)}")
    known = {"experiment", "schema_version"}
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    cfg, warnings = EXPERIMENTS[experiment].validate(raw)
    unknown = set(raw) - known - set(cfg)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    return cfg, warnings


def load_config(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("<path>", f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<path>", f"config is not valid JSON: {exc}") from exc


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


@dataclass
class RunRecord:
    """Everything one experiment run produced."""

    config: dict
    config_sha256: str
    columns: list[str]
    rows: list[list]
    aggregates: dict
    checks: list[dict]
    warnings: list[str]
    wall_time_s: float
    replicate_columns: list[str] | None = None
    replicate_rows: list[list] | None = None
    plot: dict | None = None

    @property
    def name(self) -> str:
        return self.config["name"]

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def summary(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.config["experiment"],
            "name": self.name,
            "config": self.config,
            "config_sha256": self.config_sha256,
            "seed_scheme": {
                "master_seed": self.config["seed"],
                "block_size": self.config["block_size"],
                "stream": "Philox(SeedSequence(master_seed, spawn_key=(cell, block, role)))",
            },
            "columns": self.columns,
            "n_rows": len(self.rows),
            "aggregates": _jsonable(self.aggregates),
            "checks": _jsonable(self.checks),
            "warnings": list(self.warnings),
            "pass": self.passed,
            "wall_time_s": self.wall_time_s,
        }


_WORKER_CFG_CACHE: dict[str, dict] = {}


def _run_task(payload: tuple[str, int]):
    cfg_json, index = payload
    cfg = _WORKER_CFG_CACHE.get(cfg_json)
    if cfg is None:
        cfg = json.loads(cfg_json)
        _WORKER_CFG_CACHE[cfg_json] = cfg
    exp = EXPERIMENTS[cfg["experiment"]]
    task = exp.plan(cfg)[index]
    return index, exp.run_block(cfg, task)


def run_experiment(cfg: dict, workers: int = 1,
                   warnings: list[str] | None = None) -> RunRecord:
    """Execute a validated config and reduce block results.

    Blocks run in a process pool when workers > 1; results are identical
    to the single-process run by construction.
    """
    start = time.time()
    exp = EXPERIMENTS[cfg["experiment"]]
    tasks = exp.plan(cfg)
    cfg_json = canonical_json(cfg)
    payloads = [(cfg_json, i) for i in range(len(tasks))]
    if workers <= 1 or len(tasks) <= 1:
        results = [_run_task(p) for p in payloads]
    else:
        ctx = multiprocessing.get_context("fork")
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=min(workers, len(tasks)), mp_context=ctx) as pool:
            results = list(pool.map(_run_task, payloads, chunksize=1))
    results.sort(key=lambda item: item[0])
    partials = [part for _, part in results]
    reduced = exp.reduce(cfg, partials)
    return RunRecord(
        config=cfg,
        config_sha256=config_hash(cfg),
        columns=reduced["columns"],
        rows=reduced["rows"],
        aggregates=reduced.get("aggregates", {}),
        checks=reduced.get("checks", []),
        warnings=list(warnings or []),
        wall_time_s=time.time() - start,
        replicate_columns=reduced.get("replicate_columns"),
        replicate_rows=reduced.get("replicate_rows"),
        plot=reduced.get("plot"),
    )


def default_workers() -> int:
    env = os.environ.get("CONEWALK_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


# -- output emission ---------------------------------------------------------


def emit_outputs(record: RunRecord, out_dir: str | Path,
                 formats: str = "both") -> list[Path]:
    """Write the record's tables and summary; returns written paths.

    CSV holds the data rows in the documented column order; the JSON
    summary carries the config echo, aggregates and pass/fail results.
    All bytes are deterministic except the wall_time_s summary field.
    """
    if formats not in ("csv", "json", "both"):
        raise ConfigError("format", "must be csv, json or both")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    base = record.name
    if formats in ("csv", "both"):
        path = out_dir / f"{base}.csv"
        _write_csv(path, record.columns, record.rows)
        written.append(path)
        if record.replicate_rows is not None:
            path = out_dir / f"{base}.replicates.csv"
            _write_csv(path, record.replicate_columns, record.replicate_rows)
            written.append(path)
        if record.plot is not None:
            path = out_dir / f"{base}.plotdata.csv"
            _write_csv(path, record.plot["columns"], record.plot["rows"])
            written.append(path)
    if formats in ("json", "both"):
        path = out_dir / f"{base}.summary.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(record.summary(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        written.append(path)
    return written


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return "nan"
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.floating):
        obj = float(obj)
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and obj != obj:  # NaN is not valid JSON
        return None
    return obj
