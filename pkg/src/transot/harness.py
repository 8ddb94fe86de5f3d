"""Experiment grid: split, encode, train, bound, record; then rank-correlate bounds with gaps."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .bounds import BoundReport, evaluate_bounds
from .classifier import train_classifier
from .encoders import encode, max_spectral_norm
from .graph_core import Graph, build_normalized_adjacency, generate_sbm, load_graph, sample_split
from .spectral_depth import depth_constants

log = logging.getLogger(__name__)

COLUMNS = (
    "run_id", "encoder", "depth", "clf_layers", "seed", "gamma", "R_u", "R_m_gamma", "gap",
    "M_global", "W_global", "bound_global", "bound_classwise", "bound_classwise_approx",
    "eps_delta", "proportion_term", "rho_perp", "C1", "C2", "beta", "vacuous",
    "degenerate_split_count", "gap_zero_one",
)
BOUND_FIELDS = ("bound_global", "bound_classwise", "bound_classwise_approx")
_SPLIT, _ENCODER, _CLASSIFIER, _PERMUTATIONS = range(4)


@dataclass
class RunConfig:
    graph: str | None = None
    sbm: dict | None = None
    encoder: str = "sgc"
    depths: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    clf_layers: list = field(default_factory=lambda: [1, 2, 4])
    seeds: list = field(default_factory=lambda: [0])
    train_fraction: float = 0.3
    gamma_quantile: float = 0.5
    percentile: float = 0.9
    T: int = 4
    delta: float = 0.05
    output: str | None = None
    hidden: int = 64
    epochs: int = 500
    lr: float = 0.01
    oracle_labels: bool = True
    ot_method: str = "auto"
    exact_arc_limit: int = 250_000
    workers: int = 1

    def validate(self) -> RunConfig:
        if (self.graph is None) == (self.sbm is None):
            raise ValueError("give exactly one of graph (manifest path) or sbm")
        for name in ("depths", "clf_layers", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.encoder not in ("sgc", "gcn", "raw"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_json(cls, path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def load_graph(self) -> Graph:
        if self.graph is not None:
            return load_graph(self.graph)
        spec = dict(self.sbm)
        return generate_sbm(spec.pop("blocks"), **spec)


@dataclass
class RunRecord:
    run_id: str
    encoder: str
    depth: int
    clf_layers: int
    seed: int
    report: BoundReport | None
    rho_perp: float
    C1: float
    C2: float
    beta: float
    wall_time: float = 0.0
    error: str | None = None

    def row(self) -> dict:
        r = self.report
        return {
            "run_id": self.run_id, "encoder": self.encoder, "depth": self.depth,
            "clf_layers": self.clf_layers, "seed": self.seed, "gamma": r.gamma, "R_u": r.R_u,
            "R_m_gamma": r.R_m_gamma, "gap": r.empirical_gap, "M_global": r.M_global,
            "W_global": r.W_global, "bound_global": r.bound_global,
            "bound_classwise": r.bound_classwise, "bound_classwise_approx": r.bound_classwise_approx,
            "eps_delta": r.eps_delta, "proportion_term": r.proportion_term,
            "rho_perp": self.rho_perp, "C1": self.C1, "C2": self.C2, "beta": self.beta,
            "vacuous": r.vacuous,
            "degenerate_split_count": r.degenerate_split_count + r.degenerate_split_count_approx,
            "gap_zero_one": r.gap_zero_one,
        }


def child_seed(master: int, *keys: int) -> int:
    """Seed for one grid component, a pure function of the master seed and its keys."""
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


def run_id(encoder: str, depth: int, layers: int, seed: int) -> str:
    return f"{encoder}-d{depth}-l{layers}-s{seed}"


def _run_group(args):
    """All classifier sizes for one (seed, depth); the embeddings are shared."""
    config, g, spectral, seed, depth = args
    split = sample_split(g.num_nodes, config.train_fraction, child_seed(seed, _SPLIT))
    out = []
    try:
        emb, model = encode(
            g, split, config.encoder, depth, hidden=config.hidden, epochs=config.epochs,
            lr=config.lr, seed=child_seed(seed, _ENCODER, depth),
        )
        beta = max_spectral_norm(model) if model is not None else 1.0
    except Exception as exc:  # a failed encoder fails its whole group
        log.warning("encoder failed for seed=%s depth=%s: %s", seed, depth, exc)
        return [
            RunRecord(run_id(config.encoder, depth, k, seed), config.encoder, depth, k, seed, None,
                      *spectral, math.nan, error=repr(exc))
            for k in config.clf_layers
        ]
    for layers in config.clf_layers:
        rid = run_id(config.encoder, depth, layers, seed)
        start = time.perf_counter()
        try:
            f = train_classifier(
                emb.z[split.train], g.labels[split.train], layers, config.hidden, config.epochs,
                config.lr, child_seed(seed, _CLASSIFIER, depth, layers), num_classes=g.num_classes,
            )
            report = evaluate_bounds(
                g, split, emb, f, gamma_quantile=config.gamma_quantile, percentile=config.percentile,
                T=config.T, delta=config.delta, seed=child_seed(seed, _PERMUTATIONS),
                oracle_labels=config.oracle_labels, ot_method=config.ot_method,
                exact_arc_limit=config.exact_arc_limit,
            )
            report.seeds = {
                "split": child_seed(seed, _SPLIT),
                "encoder": child_seed(seed, _ENCODER, depth),
                "classifier": child_seed(seed, _CLASSIFIER, depth, layers),
                "permutations": child_seed(seed, _PERMUTATIONS),
            }
            out.append(RunRecord(rid, config.encoder, depth, layers, seed, report, *spectral, beta,
                                 time.perf_counter() - start))
        except Exception as exc:
            log.warning("run %s failed: %s", rid, exc)
            out.append(RunRecord(rid, config.encoder, depth, layers, seed, None, *spectral, beta,
                                 time.perf_counter() - start, error=repr(exc)))
    return out


def run_experiment(config: RunConfig) -> list:
    """Every (depth, classifier size, seed) grid point, sorted by (seed, depth, layers).

    Failed grid points come back with ``error`` set and no report.
    """
    config.validate()
    g = config.load_graph()
    summary = depth_constants(build_normalized_adjacency(g), g.features)
    spectral = (summary.rho_perp, summary.C1, summary.C2)
    tasks = [(config, g, spectral, seed, depth) for seed in config.seeds for depth in config.depths]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            groups = list(pool.map(_run_group, tasks))
    else:
        groups = [_run_group(t) for t in tasks]
    records = [r for grp in groups for r in grp]
    records.sort(key=lambda r: (r.seed, r.depth, r.clf_layers))
    return records


def spearman(xs, ys):
    """Spearman rank correlation with average ranks for ties; ``None`` if either input is constant."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D and of equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return None
    return max(-1.0, min(1.0, float(rx @ ry) / denom))


def _value(record, name):
    if isinstance(record, RunRecord):
        return record.row()[name]
    return record[name]


def usable_records(records, bound_field: str):
    """Records with a finite, non-vacuous bound; returns ``(usable, excluded_count)``."""
    ok = []
    for r in records:
        if isinstance(r, RunRecord) and r.report is None:
            continue
        value = _value(r, bound_field)
        if value is None or not math.isfinite(value) or _value(r, "vacuous"):
            continue
        ok.append(r)
    return ok, len(records) - len(ok)


def correlate(records, bound_field: str, gap_field: str = "gap"):
    """Spearman correlation of ``bound_field`` against the empirical gap, vacuous runs excluded."""
    ok, excluded = usable_records(records, bound_field)
    if excluded:
        log.info("correlate(%s): excluded %d of %d records", bound_field, excluded, len(records))
    if len(ok) < 2:
        raise ValueError(f"fewer than 2 usable records for {bound_field}")
    return spearman([_value(r, bound_field) for r in ok], [_value(r, gap_field) for r in ok])


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def emit_report(records, path, config: RunConfig | None = None) -> Path:
    """Write the records CSV (pinned columns) and a JSON sidecar with the config.

    Failed runs are left out of the CSV and listed in the sidecar.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    good = [r for r in records if r.report is not None]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in good:
            row = r.row()
            writer.writerow([_fmt(row[c]) for c in COLUMNS])
    sidecar = {
        "columns": list(COLUMNS),
        "config": config.to_dict() if config is not None else None,
        "failures": [{"run_id": r.run_id, "error": r.error} for r in records if r.report is None],
        "grid": sorted({(r.depth, r.clf_layers, r.seed) for r in records}),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


_INT_COLUMNS = {"depth", "clf_layers", "seed", "degenerate_split_count"}
_STR_COLUMNS = {"run_id", "encoder"}


def read_records(path) -> list:
    """Parse a records CSV back into dicts of Python values."""
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for key, text in row.items():
                if key in _STR_COLUMNS:
                    rec[key] = text
                elif key == "vacuous":
                    rec[key] = text == "true"
                elif text == "":
                    rec[key] = None
                elif key in _INT_COLUMNS:
                    rec[key] = int(text)
                else:
                    rec[key] = float(text)
            out.append(rec)
    return out
