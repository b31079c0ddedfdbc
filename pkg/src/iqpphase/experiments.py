"""Reproducible (N, q) sweeps with an append-only JSON-lines record store.

Each instance is keyed by ``(n, q_index, instance)`` and seeded by
:func:`derive_seed`, so results do not depend on scheduling, worker count or
on whether the sweep was resumed after an interruption.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import re
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import circuit, ebm, hamiltonian
from . import diagnostics as diag
from .errors import InvalidInputError

log = logging.getLogger(__name__)

DIAGNOSTICS = ("kl_pt", "coupling_l1", "support_size", "weight_profile", "entropy", "gap_ratios", "ebm")
DEFAULT_Q_VALUES = [round(0.02 * k, 2) for k in range(16)] + [0.5, 1.0]
RECORDS_FILE = "records.jsonl"
CSV_HEADER = ["n", "q", "diagnostic", "mean", "stderr", "count"]

_SEED_MASK = 0xFFFF_FFFF_FFFF_FFFF


def derive_seed(master, n, q_index, instance_index):
    """64-bit seed from BLAKE2b-64 over the little-endian packed tuple."""
    payload = struct.pack("<Qqqq", master & _SEED_MASK, n, q_index, instance_index)
    digest = hashlib.blake2b(payload, digest_size=8, person=b"iqpphase-seed").digest()
    return int.from_bytes(digest, "little")


@dataclass
class SweepConfig:
    n_values: list = field(default_factory=lambda: [8, 10, 12, 14, 16])
    q_values: list = field(default_factory=lambda: list(DEFAULT_Q_VALUES))
    instances_per_point: int = 100
    master_seed: int = 0
    diagnostics: list = field(default_factory=lambda: ["kl_pt", "coupling_l1"])
    epsilon: float = 1e-3
    n_bins: int = diag.PT_BINS
    floor: float = diag.DEFAULT_FLOOR
    train: dict = field(default_factory=dict)
    ebm_arch: str = "adam"
    ebm_alpha: int = 30
    output_dir: str = "sweep-output"
    workers: int = 1

    def __post_init__(self):
        self.n_values = [int(n) for n in self.n_values]
        self.q_values = [float(q) for q in self.q_values]
        bad_n = [n for n in self.n_values if n % 2 or not 2 <= n <= circuit.MAX_QUBITS_HARD]
        if bad_n:
            raise InvalidInputError(f"all N must be even in [2, {circuit.MAX_QUBITS_HARD}]: {bad_n}")
        bad_q = [q for q in self.q_values if not 0.0 <= q <= 1.0]
        if bad_q:
            raise InvalidInputError(f"q values outside [0, 1]: {bad_q}")
        if self.instances_per_point < 1:
            raise InvalidInputError("instances_per_point must be >= 1")
        unknown = set(self.diagnostics) - set(DIAGNOSTICS)
        if unknown:
            raise InvalidInputError(f"unknown diagnostics {sorted(unknown)}; choose from {DIAGNOSTICS}")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidInputError("epsilon must lie in (0, 1)")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        if "ebm" in self.diagnostics:
            ebm.TrainConfig.from_dict(self.train)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f"unknown sweep config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    def tasks(self):
        for n in self.n_values:
            for qi in range(len(self.q_values)):
                for k in range(self.instances_per_point):
                    yield n, qi, k


def _converged_kl(trace, tail=0.1):
    if not trace:
        return math.nan, math.nan
    k = max(1, int(len(trace) * tail))
    last = trace[-k:]
    return (
        float(np.mean([r["kl_forward"] for r in last])),
        float(np.mean([r["kl_reverse"] for r in last])),
    )


def _diagnose(name, cfg, inst, seed, cache):
    def state():
        if "state" not in cache:
            cache["state"] = circuit.output_state(inst, "D")
        return cache["state"]

    def probs():
        if "probs" not in cache:
            cache["probs"] = circuit.output_distribution(state())
        return cache["probs"]

    def spectrum():
        if "spectrum" not in cache:
            cache["spectrum"] = hamiltonian.reconstruct(probs())
        return cache["spectrum"]

    if name == "kl_pt":
        return diag.kl_to_porter_thomas(probs(), cfg.n_bins)
    if name == "coupling_l1":
        spec = spectrum()
        return {
            "l1": hamiltonian.coupling_l1(spec),
            "normalized": hamiltonian.normalized_complexity(spec),
        }
    if name == "support_size":
        res = hamiltonian.find_truncation_threshold(probs(), cfg.epsilon)
        return {"size": res.support_size, "delta": res.delta, "l1": res.l1}
    if name == "weight_profile":
        return hamiltonian.weight_profile(spectrum()).tolist()
    if name == "entropy":
        return diag.entanglement_entropy(diag.entanglement_spectrum(state()))
    if name == "gap_ratios":
        u = diag.gap_ratios(diag.entanglement_spectrum(state()), cfg.floor)
        folded = diag.fold_ratios(u)
        return {
            "ratios": u.tolist(),
            "folded_mean": float(folded.mean()) if folded.size else math.nan,
        }
    if name == "ebm":
        target = circuit.distribution(inst, "F")
        tcfg = ebm.TrainConfig.from_dict({**cfg.train, "seed": seed})
        model = ebm.init_model(inst.n_qubits, cfg.ebm_arch, cfg.ebm_alpha, seed=seed)
        result = ebm.train(target, tcfg, model)
        fwd, rev = _converged_kl(result.trace)
        return {"kl_forward": fwd, "kl_reverse": rev, "final_kl_forward": result.final_kl}
    raise InvalidInputError(f"unknown diagnostic {name!r}")


def compute_record(cfg, n, q_index, k):
    """Run every requested diagnostic for one instance; failures become error entries."""
    q = cfg.q_values[q_index]
    seed = derive_seed(cfg.master_seed, n, q_index, k)
    rec = {
        "key": [n, q_index, k],
        "n": n,
        "q": q,
        "q_index": q_index,
        "instance": k,
        "seed": seed,
        "results": {},
        "errors": {},
        "timing": {},
    }
    try:
        inst = circuit.sample_instance(n, q, seed)
    except Exception as exc:  # noqa: BLE001 - recorded, never fatal
        rec["errors"] = {d: f"instance: {exc!r}" for d in cfg.diagnostics}
        return rec
    cache = {}
    for name in cfg.diagnostics:
        t0 = time.perf_counter()
        try:
            rec["results"][name] = _diagnose(name, cfg, inst, seed, cache)
        except Exception as exc:  # noqa: BLE001 - per-diagnostic failure is data
            rec["errors"][name] = f"{type(exc).__name__}: {exc}"
        rec["timing"][name] = time.perf_counter() - t0
    return rec


def _compute_task(args):
    cfg, task = args
    return compute_record(cfg, *task)


class RecordStore:
    """Append-only JSON-lines file; one fsync'd line per record."""

    def __init__(self, path):
        self.path = Path(path)

    def load(self):
        """Read complete records, dropping a torn final line left by a crash."""
        if not self.path.exists():
            return []
        raw = self.path.read_bytes()
        end = raw.rfind(b"\n") + 1
        if end < len(raw):
            log.warning("discarding %d bytes of incomplete record in %s", len(raw) - end, self.path)
            with open(self.path, "r+b") as fh:
                fh.truncate(end)
            raw = raw[:end]
        return [json.loads(line) for line in raw.decode().splitlines() if line.strip()]

    def append(self, record):
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record, allow_nan=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


@dataclass(frozen=True)
class AggregateRow:
    n: int
    q: float
    diagnostic: str
    mean: float
    stderr: float
    count: int

    @property
    def sd(self):
        return self.stderr * math.sqrt(self.count)


@dataclass
class SweepReport:
    rows: list
    records: list = field(default_factory=list, compare=False)

    def to_dict(self):
        return {"rows": [asdict(r) for r in self.rows]}

    def lookup(self, n, q, diagnostic):
        for r in self.rows:
            if r.n == n and r.q == q and r.diagnostic == diagnostic:
                return r
        raise KeyError((n, q, diagnostic))


def _flatten(name, value, out):
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(v, list):
                _flatten(f"{name}.{k}", v, out)
    elif isinstance(value, list):
        for k, v in enumerate(value):
            out[f"{name}[{k}]"] = v
    elif value is not None:
        out[name] = float(value)


def _diag_key(name):
    m = re.fullmatch(r"(.*)\[(\d+)\]", name)
    return (m.group(1), int(m.group(2))) if m else (name, -1)


def aggregate(records):
    """Mean, standard error and count of every scalar diagnostic per (N, q).

    Vector diagnostics are aggregated elementwise (``weight_profile[k]``).
    Non-finite values are skipped; a group left empty is omitted with a
    warning.  A single-record group reports stderr 0.
    """
    groups = {}
    for rec in records:
        flat = {}
        for name, value in rec.get("results", {}).items():
            _flatten(name, value, flat)
        g = groups.setdefault((int(rec["n"]), float(rec["q"])), {})
        for name, v in flat.items():
            g.setdefault(name, []).append(v)
        for name in rec.get("errors", {}):
            g.setdefault(name, [])
    rows = []
    for (n, q) in sorted(groups):
        for name in sorted(groups[(n, q)], key=_diag_key):
            vals = sorted(v for v in groups[(n, q)][name] if math.isfinite(v))
            if not vals:
                log.warning("no finite values for %s at N=%d q=%g; omitted", name, n, q)
                continue
            arr = np.array(vals)
            count = arr.size
            sd = float(arr.std(ddof=1)) if count > 1 else 0.0
            if count == 1:
                log.info("single record for %s at N=%d q=%g; stderr reported as 0", name, n, q)
            rows.append(AggregateRow(n, q, name, float(arr.mean()), sd / math.sqrt(count), count))
    return SweepReport(rows, list(records))


def run_sweep(cfg, workers=None, progress=None):
    """Run (or resume) a sweep; returns the aggregate report over all stored records."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    store = RecordStore(out / RECORDS_FILE)
    existing = store.load()
    done = {tuple(r["key"]) for r in existing}
    todo = [t for t in cfg.tasks() if t not in done]
    workers = workers or cfg.workers
    log.info("%d tasks to run (%d already recorded)", len(todo), len(done))

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_compute_task, [(cfg, t) for t in todo], chunksize=1):
                store.append(rec)
                if progress:
                    progress(rec)
    else:
        for t in todo:
            rec = compute_record(cfg, *t)
            store.append(rec)
            if progress:
                progress(rec)

    records = store.load()
    report = aggregate(records)
    export(report, "csv", out / "aggregate.csv")
    export(report, "json", out / "aggregate.json")
    return report


def export(report, fmt, path):
    """Write the aggregate table as CSV (fixed header) or pretty JSON."""
    path = Path(path)
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_HEADER)
                for r in report.rows:
                    w.writerow([r.n, repr(r.q), r.diagnostic, repr(r.mean), repr(r.stderr), r.count])
        elif fmt == "json":
            path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        else:
            raise InvalidInputError(f"format must be csv or json, got {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report(path):
    """Parse a report previously written by :func:`export`."""
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        return SweepReport([AggregateRow(**r) for r in data["rows"]])
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [
            AggregateRow(int(r["n"]), float(r["q"]), r["diagnostic"], float(r["mean"]),
                         float(r["stderr"]), int(r["count"]))
            for r in reader
        ]
    return SweepReport(rows)


def strip_timing(records):
    """Records without wall-clock metadata, for value-level comparisons."""
    return [{k: v for k, v in r.items() if k != "timing"} for r in records]
