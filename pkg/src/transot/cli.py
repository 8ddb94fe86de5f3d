"""Command-line entry point: ``transot <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .graph_core import generate_sbm, load_graph, sample_split, save_graph
from .ot import wasserstein1_1d, wasserstein1_exact, wasserstein1_sinkhorn
from .spectral_depth import depth_constants, depth_diagnostics


def _int_list(text: str) -> list:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _write_text(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_points(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append([float(v) for v in row])
    return np.array(rows, dtype=np.float64)


def cmd_bound(args) -> int:
    config = harness.RunConfig(
        graph=args.graph, encoder=args.encoder, depths=[args.depth], clf_layers=[args.clf_layers],
        seeds=[args.seed], train_fraction=args.train_fraction, gamma_quantile=args.gamma_quantile,
        percentile=args.percentile, T=args.permutations, delta=args.delta, hidden=args.hidden,
        epochs=args.epochs, lr=args.lr, oracle_labels=args.oracle_labels == "on", ot_method=args.ot,
        exact_arc_limit=args.exact_arc_limit,
    )
    (record,) = harness.run_experiment(config)
    if record.report is None:
        print(f"run failed: {record.error}", file=sys.stderr)
        return 1
    text = json.dumps(_json_safe(record.report.to_dict()), indent=2, sort_keys=True) + "\n"
    _write_text(text, args.out)
    return 0


def cmd_depth_sweep(args) -> int:
    g = load_graph(args.graph)
    split = sample_split(g.num_nodes, args.train_fraction, harness.child_seed(args.seed, 0))
    rows = depth_diagnostics(
        g, args.encoder, _int_list(args.depths), split, T=args.permutations,
        seed=harness.child_seed(args.seed, 3), hidden=args.hidden, epochs=args.epochs, lr=args.lr,
        ot_method=args.ot, exact_arc_limit=args.exact_arc_limit,
    )
    envelope = "envelope_gcn" if args.encoder == "gcn" else "envelope_sgc"
    columns = ["depth", "W_G", "W_C", "W_S", envelope, "rho_perp", "C1", "C2", "beta"]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(harness._fmt(row[c]) for c in columns))
    _write_text("\n".join(lines) + "\n", args.out)
    return 0


def cmd_correlate(args) -> int:
    records = harness.read_records(args.records)
    for name in args.fields or harness.BOUND_FIELDS:
        ok, excluded = harness.usable_records(records, name)
        if len(ok) < 2:
            print(f"{name}: n/a ({len(ok)} usable, {excluded} excluded)")
            continue
        rho = harness.correlate(records, name)
        shown = "undefined" if rho is None else f"{rho:.4f}"
        print(f"{name}: {shown} ({len(ok)} usable, {excluded} excluded)")
    grid = sorted({(r["depth"], r["clf_layers"], r["seed"]) for r in records})
    print(f"grid: {len(grid)} points, depths={sorted({d for d, _, _ in grid})}, "
          f"clf_layers={sorted({k for _, k, _ in grid})}, seeds={sorted({s for _, _, s in grid})}")
    return 0


def cmd_gen_sbm(args) -> int:
    g = generate_sbm(_int_list(args.blocks), args.p_in, args.p_out, args.feature_dim, args.feature_shift, args.seed)
    path = save_graph(g, args.out, name=args.name)
    print(path)
    return 0


def cmd_ot_check(args) -> int:
    a, b = _read_points(args.points_a), _read_points(args.points_b)
    if args.method == "exact":
        cost, plan = wasserstein1_exact(a, b, force=args.force)
        if args.plan:
            with open(args.plan, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["i", "j", "mass"])
                for i, j, mass in plan.triples():
                    writer.writerow([i, j, repr(mass)])
    elif args.method == "1d":
        if a.shape[1] != 1 or b.shape[1] != 1:
            raise SystemExit("--method 1d needs single-column inputs")
        cost = wasserstein1_1d(a[:, 0], b[:, 0])
    else:
        cost = wasserstein1_sinkhorn(a, b, epsilon=args.epsilon)
    print(repr(cost))
    return 0


def cmd_run(args) -> int:
    config = harness.RunConfig.from_json(args.config)
    if args.workers:
        config.workers = args.workers
    out = args.out or config.output
    if not out:
        raise SystemExit("no output path: pass --out or set 'output' in the config")
    records = harness.run_experiment(config)
    harness.emit_report(records, out, config)
    print(out)
    return 0


def cmd_convert_planetoid(args) -> int:
    from .planetoid import convert_planetoid

    print(convert_planetoid(args.raw_dir, args.name, args.out))
    return 0


def cmd_spectral(args) -> int:
    from .graph_core import build_normalized_adjacency

    g = load_graph(args.graph)
    s = depth_constants(build_normalized_adjacency(g), g.features)
    print(json.dumps({"rho_perp": s.rho_perp, "C1": s.C1, "C2": s.C2, "disconnected": s.disconnected}, sort_keys=True))
    return 0


def _training_args(p):
    p.add_argument("--train-fraction", type=float, default=0.3)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--permutations", type=int, default=4, help="sampled splits T")
    p.add_argument("--ot", choices=("auto", "exact", "sinkhorn"), default="auto")
    p.add_argument("--exact-arc-limit", type=int, default=250_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transot", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="all bounds for one (encoder, depth, classifier, seed)")
    p.add_argument("--graph", required=True, help="graph manifest JSON")
    p.add_argument("--encoder", choices=("sgc", "gcn", "raw"), default="sgc")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--clf-layers", type=int, choices=(1, 2, 4), default=2)
    p.add_argument("--gamma-quantile", type=float, default=0.5)
    p.add_argument("--percentile", type=float, default=0.9)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--oracle-labels", choices=("on", "off"), default="on")
    p.add_argument("--out")
    _training_args(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("depth-sweep", help="W_G / W_C / W_S and envelopes across depths")
    p.add_argument("--graph", required=True)
    p.add_argument("--encoder", choices=("sgc", "gcn"), default="sgc")
    p.add_argument("--depths", default="1,2,4,8,16,32")
    p.add_argument("--out")
    _training_args(p)
    p.set_defaults(func=cmd_depth_sweep)

    p = sub.add_parser("correlate", help="Spearman rho of each bound column against the gap")
    p.add_argument("records")
    p.add_argument("--field", dest="fields", action="append")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("gen-sbm", help="write a stochastic block model dataset")
    p.add_argument("--blocks", required=True, help="comma-separated block sizes")
    p.add_argument("--p-in", type=float, required=True)
    p.add_argument("--p-out", type=float, required=True)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--feature-shift", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="sbm")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_sbm)

    p = sub.add_parser("ot-check", help="W1 between two point-cloud CSV files")
    p.add_argument("points_a")
    p.add_argument("points_b")
    p.add_argument("--method", choices=("exact", "1d", "sinkhorn"), default="exact")
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--force", action="store_true", help="lift the exact solver's size guard")
    p.add_argument("--plan", help="write the optimal plan as i,j,mass CSV")
    p.set_defaults(func=cmd_ot_check)

    p = sub.add_parser("run", help="run an experiment grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("convert-planetoid", help="convert ind.<name>.* files into a manifest dataset")
    p.add_argument("--raw-dir", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert_planetoid)

    p = sub.add_parser("spectral", help="rho_perp, C1, C2 of a graph")
    p.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_spectral)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
