"""Experiment runner: trials over compression factors, methods and seeds.

Outputs written to ``config.out``:

``results.csv``
    One row per (R, trial, method) with columns
    ``pipeline, signal, R, trial, method, ser_db, matvecs, steps, wall_ms``.
    ``wall_ms`` is ``0`` unless ``record_timing`` is set, so repeated runs
    produce identical bytes.
``iters.jsonl``
    Per-iteration records tagged with (R, trial, method).
``timing.csv``
    Wall-clock time per (R, trial, method); never byte-stable.
``plotdata/<pipeline>_<signal>.csv``
    Means over trials per (R, method).
"""
from __future__ import annotations

import csv
import io
import json
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .signals import (
    SIGNAL_KINDS,
    MeasurementSpec,
    SignalSpec,
    gen_dynamic_sequence,
    gen_measurements,
    gen_signal,
    make_signal,
    ser_db,
)
from .streaming_dynamic import DynamicStreamConfig, DynamicStreamer, KalmanStreamer
from .streaming_lot import LotStreamConfig, LotStreamer

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "TrialRecord",
    "RESULT_COLUMNS",
    "load_config",
    "parse_config_text",
    "make_config",
    "make_stream",
    "run_trial",
    "run_experiment",
    "read_results",
    "aggregate",
]

PIPELINES = ("lot", "dynamic")
SOLVERS = ("homotopy", "prox-oracle")
BASELINES = {"lot": ("dct",), "dynamic": ("ls-kalman", "dwt-only")}
RESULT_COLUMNS = ("pipeline", "signal", "R", "trial", "method", "ser_db", "matvecs",
                  "steps", "wall_ms")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    pipeline: str = "lot"
    signal: str = "LinChirp"
    N: int = 256
    P: int | None = None              # 5 for lot, 3 for dynamic
    R: tuple = (2,)
    snr_db: float = 35.0
    lam: float = 0.5
    trials: int = 1
    seed: int = 0                     # trial k uses seed + k
    solver: str = "homotopy"
    baselines: tuple = ()
    out: str = "results"
    desk_scale_length: int = 2 ** 13
    full_scale: bool = False          # 2**15 samples
    predictor: str = "extension-ls"
    record_timing: bool = False
    workers: int = 1

    @property
    def length(self):
        return 2 ** 15 if self.full_scale else self.desk_scale_length

    @property
    def window(self):
        if self.P is not None:
            return self.P
        return 5 if self.pipeline == "lot" else 3

    def methods(self):
        return (self.solver,) + tuple(self.baselines)

    def validate(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline: expected one of {PIPELINES}, got {self.pipeline!r}")
        if self.signal not in SIGNAL_KINDS:
            raise ConfigError(f"signal: expected one of {SIGNAL_KINDS}, got {self.signal!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver: expected one of {SOLVERS}, got {self.solver!r}")
        for b in self.baselines:
            if b not in BASELINES[self.pipeline]:
                raise ConfigError(
                    f"baselines: {b!r} is not available for the {self.pipeline} pipeline "
                    f"(choose from {BASELINES[self.pipeline]})")
        for name in ("N", "trials", "desk_scale_length", "workers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be positive")
        if self.P is not None and self.P < 2:
            raise ConfigError("P: must be at least 2")
        if self.snr_db <= 0:
            raise ConfigError("snr_db: must be positive")
        if self.lam <= 0:
            raise ConfigError("lam: must be positive")
        if self.seed < 0:
            raise ConfigError("seed: must be non-negative")
        if not self.R:
            raise ConfigError("R: at least one compression factor is required")
        for r in self.R:
            if r <= 0 or self.N % r:
                raise ConfigError(f"R: {r} does not divide N={self.N}")
        if self.length % self.N:
            raise ConfigError("desk_scale_length: must be a multiple of N")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name, raw, where=""):
    kind = _FIELD_TYPES.get(name)
    if kind is None:
        raise ConfigError(f"{where}unknown field {name!r}")
    try:
        if name == "R":
            vals = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
            return tuple(int(v) for v in vals if str(v).strip())
        if name == "baselines":
            vals = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
            return tuple(str(v).strip() for v in vals if str(v).strip())
        if kind in ("int", "int | None"):
            if raw is None or str(raw).lower() in ("", "none"):
                if kind == "int":
                    raise ValueError("value required")
                return None
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return str(raw).strip()
    except ValueError as exc:
        raise ConfigError(f"{where}{name}: {exc}") from None


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = _coerce(key, raw, f"{source}:{lineno}: ")
    return values


def load_config(path):
    return parse_config_text(Path(path).read_text(), str(path))


def make_config(file_values=None, overrides=None):
    """Defaults, then file values, then overrides (``None`` entries ignored)."""
    merged = {}
    for src in (file_values or {}, overrides or {}):
        for k, v in src.items():
            if v is not None:
                merged[k] = _coerce(k, v)
    return ExperimentConfig(**merged).validate()


@dataclass
class TrialRecord:
    pipeline: str
    signal: str
    R: int
    trial: int
    method: str
    ser_db: float
    matvecs: float
    steps: int
    wall_ms: float = 0.0
    iterations: list = field(default_factory=list, repr=False)

    def row(self, timing=False):
        return [self.pipeline, self.signal, self.R, self.trial, self.method,
                repr(float(self.ser_db)), repr(float(self.matvecs)), self.steps,
                repr(float(self.wall_ms)) if timing else "0"]

    @classmethod
    def from_row(cls, row):
        return cls(row["pipeline"], row["signal"], int(row["R"]), int(row["trial"]),
                   row["method"], float(row["ser_db"]), float(row["matvecs"]),
                   int(row["steps"]), float(row["wall_ms"]))


def make_stream(config, R, trial):
    """Ground truth and measurements for one trial."""
    seed = config.seed + trial
    N, P = config.N, config.window
    mspec = MeasurementSpec(R=R, block_length=N, snr_db=config.snr_db)
    if config.pipeline == "lot":
        x = gen_signal(SignalSpec(config.signal, config.length, N, prefix=True), seed)
        meas = gen_measurements(x.reshape(-1, N), mspec, seed)
        return x, None, meas
    T = config.length // N + P - 1
    x0 = make_signal(config.signal, N)
    blocks, _ = gen_dynamic_sequence(x0, T=T, seed=seed)
    meas = gen_measurements(blocks, mspec, seed)
    return blocks.reshape(-1), x0, meas


def _streamer(config, method):
    if config.pipeline == "lot":
        rep = "dct" if method == "dct" else "lot"
        solver = config.solver
        return LotStreamer(LotStreamConfig(N=config.N, P=config.window, representation=rep,
                                           solver=solver, predictor=config.predictor))
    if method == "ls-kalman":
        return KalmanStreamer(DynamicStreamConfig(N=config.N, P=config.window, lam=config.lam))
    lam = 0.0 if method == "dwt-only" else config.lam
    return DynamicStreamer(DynamicStreamConfig(N=config.N, P=config.window, lam=lam,
                                               solver=config.solver))


def run_trial(config, R, trial):
    """All methods on one (R, trial) stream."""
    x, x0, meas = make_stream(config, R, trial)
    out = []
    for method in config.methods():
        s = _streamer(config, method)
        if config.pipeline == "lot":
            res = s.run(meas, x)
        else:
            res = s.run(meas, x0, x)
        out.append(TrialRecord(
            config.pipeline, config.signal, R, trial, method, ser_db(x, res.x_est),
            float(res.matvecs), int(res.steps), float(res.wall_ms),
            [json.loads(r.to_json()) for r in res.records],
        ))
    return out


def _run_job(args):
    config, R, trial = args
    return run_trial(config, R, trial)


def aggregate(records):
    """Mean of ``ser_db, matvecs, steps, wall_ms`` per (R, method)."""
    groups = defaultdict(list)
    for r in records:
        groups[(r.R, r.method)].append(r)
    out = []
    for (R, method), rs in sorted(groups.items()):
        out.append({
            "R": R, "method": method, "trials": len(rs),
            "ser_db": float(np.mean([r.ser_db for r in rs])),
            "matvecs": float(np.mean([r.matvecs for r in rs])),
            "steps": float(np.mean([r.steps for r in rs])),
            "wall_ms": float(np.mean([r.wall_ms for r in rs])),
        })
    return out


def read_results(path):
    with open(path, newline="") as fh:
        return [TrialRecord.from_row(row) for row in csv.DictReader(fh)]


def run_experiment(config, progress=None):
    """Run every (R, trial) job and write the output files; return the records.

    Jobs may run in a process pool; rows are written in job order as each
    job completes, so the files are identical for any worker count.
    """
    config.validate()
    out = Path(config.out)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    jobs = [(config, R, k) for R in config.R for k in range(config.trials)]
    records = []
    with open(out / "results.csv", "w", newline="") as fres, \
         open(out / "iters.jsonl", "w") as fit, \
         open(out / "timing.csv", "w", newline="") as ftime:
        wres, wtime = csv.writer(fres, lineterminator="\n"), csv.writer(ftime, lineterminator="\n")
        wres.writerow(RESULT_COLUMNS)
        wtime.writerow(["R", "trial", "method", "wall_ms"])
        if config.workers > 1:
            pool = ProcessPoolExecutor(max_workers=config.workers)
            results = pool.map(_run_job, jobs)
        else:
            pool = None
            results = map(_run_job, jobs)
        try:
            for batch in results:
                for rec in batch:
                    wres.writerow(rec.row(config.record_timing))
                    wtime.writerow([rec.R, rec.trial, rec.method, f"{rec.wall_ms:.3f}"])
                    for it in rec.iterations:
                        it = {"pipeline": rec.pipeline, "signal": rec.signal, "R": rec.R,
                              "trial": rec.trial, "method": rec.method, **it}
                        fit.write(json.dumps(it) + "\n")
                    records.append(rec)
                    if progress is not None:
                        progress(rec)
                for fh in (fres, fit, ftime):
                    fh.flush()
        finally:
            if pool is not None:
                pool.shutdown()
    if not config.record_timing:
        for r in records:
            r.wall_ms = 0.0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["R", "method", "trials", "ser_db", "matvecs", "steps", "wall_ms"])
    for a in aggregate(records):
        w.writerow([a["R"], a["method"], a["trials"], repr(a["ser_db"]), repr(a["matvecs"]),
                    repr(a["steps"]), repr(a["wall_ms"])])
    (out / "plotdata" / f"{config.pipeline}_{config.signal}.csv").write_text(buf.getvalue())
    (out / "config.json").write_text(json.dumps(asdict(config), indent=1, sort_keys=True) + "\n")
    return records


def default_workers():
    return max(1, min(4, os.cpu_count() or 1))
