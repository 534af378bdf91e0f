"""Command line entry point: simulate, analyze, score, graph-metrics.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .classify import (
    CONTROL_PLANE_LABELS,
    DATA_PLANE_LABELS,
    apply_threshold,
    classify_control_paths,
    classify_paths,
    format_distribution,
    read_classification_report,
    write_classification_report,
)
from .correlate import intersect_and_score, write_correlation_report
from .ingest import IpMappingDb, load_control_dump, load_traceroutes
from .ixp import extract_peerings, ixp_report, ratio_summary, write_ixp_report, write_peerings
from .propgraph import (
    EmptyGraph,
    build_g1,
    derive_g2,
    derive_g3,
    format_metrics_table,
    metrics,
    read_edges,
    tree_depth,
    write_edges,
    write_metrics_report,
)
from .rpki import MalformedRecord, Prefix, load_vrps
from .simnet import (
    FIXTURE_ORIGIN_A,
    FIXTURE_ORIGIN_B,
    FIXTURE_P1,
    FIXTURE_P2,
    ExperimentConfig,
    NonConvergence,
    ScenarioError,
    builtin_scenario,
    generate_topology,
    load_scenario,
    run_experiment,
    write_artifacts,
)
from .simnet.topology import GeneratorParams, Noise

log = logging.getLogger("rovscope")

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2

BUILTIN_SCENARIOS = ("fig2", "fig2-none", "random")


class InvariantViolation(RuntimeError):
    pass


@dataclass
class RunManifest:
    command: str
    scenario: str | None = None
    seed: int | None = None
    inputs: list[str] = field(default_factory=list)
    out_dir: str = ""
    stages: dict[str, bool] = field(default_factory=dict)
    flags: dict[str, object] = field(default_factory=dict)
    version: str = __version__

    def write(self, out_dir: Path) -> None:
        (out_dir / "manifest.json").write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


# -- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    out = Path(args.out)
    if args.scenario in BUILTIN_SCENARIOS and not Path(args.scenario).exists():
        scenario = builtin_scenario(args.scenario, seed=args.seed or 0)
    else:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario = _reseed(args.scenario, scenario, args.seed)
    topo = scenario.topology
    comps = topo.components()
    if len(comps) > 1:
        log.warning(
            "topology has %d disconnected components (sizes %s); unreachable ASes get no routes",
            len(comps),
            sorted((len(c) for c in comps), reverse=True),
        )
    arts = run_experiment(topo, scenario.experiment, scenario.noise)
    write_artifacts(arts, out)
    RunManifest(
        command="simulate",
        scenario=str(args.scenario),
        seed=scenario.seed,
        out_dir=str(out),
        stages={"simulate": True},
        flags={"components": len(comps)},
    ).write(out)
    log.info(
        "wrote %d traceroute records and %d control paths to %s",
        len(arts.traceroutes),
        len(arts.control_paths),
        out,
    )
    return EXIT_OK


def _reseed(path, scenario, seed):
    data = json.loads(Path(path).read_text())
    data["seed"] = seed
    data.setdefault("noise", {})["seed"] = seed
    if "generator" in data:
        data["generator"]["seed"] = seed
    from .simnet import scenario_from_dict

    return scenario_from_dict(data)


# -- analyze -----------------------------------------------------------------


def _read_experiment(in_dir: Path, strict: bool):
    exp_file = in_dir / "experiment.json"
    if exp_file.exists():
        data = json.loads(exp_file.read_text())
        origins = [int(o) for o in data["origins"]]
        prefixes = [Prefix.parse(p) for p in data["prefixes"]]
    else:
        log.warning("no experiment.json in %s; assuming the default origins and prefixes", in_dir)
        origins, prefixes = [FIXTURE_ORIGIN_A, FIXTURE_ORIGIN_B], [FIXTURE_P1, FIXTURE_P2]
    exp = ExperimentConfig(origins[0], origins[1], prefixes[0], prefixes[1])
    vrps = {}
    for config in ("A", "B"):
        roa_file = in_dir / f"roas_{config}.csv"
        if roa_file.exists():
            vrps[config] = load_vrps(roa_file, strict)
        else:
            log.warning("%s missing; deriving configuration %s ROAs from the experiment", roa_file, config)
            vrps[config] = exp.with_configuration(config).vrps()
    return exp, vrps


def _read_keyed_csv(path: Path) -> dict[int, str]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or not row[0].strip().isdigit():
                continue
            out[int(row[0])] = row[1].strip()
    return out


def _breakdown(cats: dict[int, int], groups: dict[int, str]) -> list[tuple[str, int, int]]:
    counts = defaultdict(int)
    for asn, cat in cats.items():
        counts[(groups.get(asn, "unknown"), cat)] += 1
    return [(g, c, counts[(g, c)]) for g, c in sorted(counts)]


def _tier1_and_tree(in_dir: Path) -> dict[int, set[int]] | None:
    rel = in_dir / "as_rel.csv"
    if not rel.exists():
        return None
    tree: dict[int, set[int]] = defaultdict(set)
    with open(rel) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            provider, customer = (int(x) for x in line.split(",")[:2])
            tree[provider].add(customer)
    return tree


def load_inputs(in_dir: Path, strict: bool = False):
    """Ingest an artifact directory into (data paths, control paths)."""
    exp, vrps = _read_experiment(in_dir, strict)
    if (in_dir / "ip2as.csv").exists():
        optional = [in_dir / n if (in_dir / n).exists() else None for n in ("ixp_lans.csv", "target_equiv.csv")]
        db = IpMappingDb.load(in_dir / "ip2as.csv", *optional, strict=strict)
    else:
        db = IpMappingDb()
    trace_file, dump_file = in_dir / "traceroutes.jsonl", in_dir / "control_dump.txt"
    data_paths = load_traceroutes(trace_file, db, exp.origins, vrps, strict) if trace_file.exists() else []
    control_paths = load_control_dump(dump_file, exp.origins, vrps, strict) if dump_file.exists() else []
    return data_paths, control_paths


def run_analysis(in_dir: Path, out: Path, args) -> dict:
    data_paths, control_paths = load_inputs(in_dir, args.strict_parse)
    if not data_paths and not control_paths:
        log.warning("no usable paths in %s; reports will be empty", in_dir)

    data_cats, data_ev, _ = classify_paths(data_paths)
    control_cats, control_ev = classify_control_paths(control_paths)
    data_flagged = apply_threshold(data_cats, data_ev, args.threshold_paths, args.threshold_routers)
    control_flagged = apply_threshold(control_cats, control_ev, args.threshold_paths, args.threshold_routers)
    _check_partition(data_cats, data_ev)
    write_classification_report(
        out / "classification.csv",
        (data_cats, data_ev, data_flagged),
        (control_cats, control_ev, control_flagged),
    )

    corr = intersect_and_score(control_cats, data_cats)
    write_correlation_report(out / "correlation.csv", corr)

    peerings = extract_peerings(data_paths)
    reports = ixp_report(peerings)
    write_ixp_report(out / "ixp_report.csv", reports)
    write_peerings(out / "ixp_peerings.csv", peerings)

    enforcing_cats = {6, 7} if args.enforcing_set == "c67" else {3, 6, 7}
    enforcing = {a for a, c in data_cats.items() if c in enforcing_cats}
    g1 = build_g1(data_paths)
    graphs = {"G1": g1, "G2": derive_g2(g1, enforcing), "G3": derive_g3(g1)}
    table = {}
    for name, g in graphs.items():
        write_edges(out / f"edges_{name.lower()}.csv", g)
        try:
            table[name] = metrics(g)
        except EmptyGraph:
            log.warning("graph %s is empty; metrics skipped", name)
    if table:
        write_metrics_report(out / "graph_metrics.csv", table)

    summary = [
        f"data-plane paths: {len(data_paths)}; control-plane paths: {len(control_paths)}",
        "",
        f"Control-plane categories ({len(control_cats)} ASes):",
        format_distribution(control_cats, CONTROL_PLANE_LABELS),
        "",
        f"Data-plane categories ({len(data_cats)} ASes):",
        format_distribution(data_cats, DATA_PLANE_LABELS),
        "",
        f"Threshold (paths < {args.threshold_paths:.0%}, routers < {args.threshold_routers:.0%}): "
        f"{len(data_flagged)} / {sum(1 for c in data_cats.values() if c <= 3)} ASes in C1-C3 flagged",
        "",
        f"Correlation: intersection {len(corr.verdicts)}, high {corr.high}, medium {corr.medium}, "
        f"low {corr.low}; only control {corr.only_control}, only data {corr.only_data}",
        "",
    ]
    ratios_all, ratios_top = ratio_summary(reports), ratio_summary(reports, top=5)
    summary.append(
        f"IXPs observed: {len(reports)}; direct/routeserver mean-path ratio "
        f"all {_num(ratios_all['pooled_ratio'])} (per-IXP mean {_num(ratios_all['mean_per_ixp_ratio'])}), "
        f"top five {_num(ratios_top['pooled_ratio'])} (per-IXP mean {_num(ratios_top['mean_per_ixp_ratio'])})"
    )
    for r in sorted(reports, key=lambda r: -r.total_paths)[:5]:
        summary.append(
            f"  IXP {r.ixp_id}: {r.invalid_fraction:.1%} invalid paths ({r.invalid_paths} / {r.total_paths})"
        )
    summary.append("")
    if table:
        summary += [f"Graphs (enforcing set {args.enforcing_set}):", format_metrics_table(table), ""]

    extra = _optional_reports(in_dir, out, data_cats, g1)
    summary += extra
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return {"data_paths": len(data_paths), "control_paths": len(control_paths)}


def _num(x) -> str:
    return "n/a" if x is None else f"{x:.2f}x"


def _optional_reports(in_dir: Path, out: Path, data_cats: dict[int, int], g1) -> list[str]:
    lines = []
    for name in ("continent", "type"):
        src = in_dir / f"asn_{name}.csv"
        if not src.exists():
            log.info("asn_%s.csv not supplied; %s breakdown skipped", name, name)
            continue
        rows = _breakdown(data_cats, _read_keyed_csv(src))
        with open(out / f"breakdown_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([name, "category", "count"])
            w.writerows(rows)
        lines.append(f"Category breakdown by {name} written to breakdown_{name}.csv")
    tree = _tier1_and_tree(in_dir)
    if tree is not None:
        customers = {c for cs in tree.values() for c in cs}
        tier1 = {p for p in tree if p not in customers}
        if tier1:
            depth = tree_depth(tree, tier1)
            by_cat = defaultdict(list)
            for asn, cat in data_cats.items():
                if depth.get(asn) is not None:
                    by_cat[cat].append(depth[asn])
            with open(out / "tree_depth.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["category", "ases", "mean_depth"])
                for cat in sorted(by_cat):
                    w.writerow([cat, len(by_cat[cat]), f"{sum(by_cat[cat]) / len(by_cat[cat]):.3f}"])
            enf = [d for c, ds in by_cat.items() if c in (6, 7) for d in ds]
            non = by_cat.get(1, [])
            if enf and non:
                lines.append(
                    f"Mean tree depth: enforcing (C6/C7) {sum(enf) / len(enf):.2f}, "
                    f"non-enforcing (C1) {sum(non) / len(non):.2f}"
                )
    return lines


def _check_partition(cats: dict[int, int], evidence) -> None:
    for asn, cat in cats.items():
        has_invalid = evidence[asn].invalid_path_count > 0
        if has_invalid != (cat in (1, 2, 3)):
            raise InvariantViolation(f"AS{asn}: category {cat} inconsistent with invalid path count")


def cmd_analyze(args) -> int:
    src, out = Path(args.input), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flags = {
        "enforcing_set": args.enforcing_set,
        "threshold_paths": args.threshold_paths,
        "threshold_routers": args.threshold_routers,
        "strict_parse": args.strict_parse,
    }
    if args.graphs_only:
        edges = src if src.is_file() else src / "edges_g1.csv"
        return _graph_metrics(edges, out, args.strict_parse, "analyze", flags)
    if not src.is_dir():
        raise FileNotFoundError(f"input directory {src} does not exist")
    counts = run_analysis(src, out, args)
    RunManifest(
        command="analyze",
        inputs=sorted(str(p) for p in src.iterdir() if p.is_file()),
        out_dir=str(out),
        stages={"ingest": True, "classify": True, "correlate": True, "ixp": True, "propgraph": True},
        flags={**flags, **counts},
    ).write(out)
    return EXIT_OK


def _graph_metrics(edges: Path, out: Path, strict: bool, command: str, flags: dict) -> int:
    g1 = read_edges(edges, strict)
    table = {"G1": metrics(g1), "G3": metrics(derive_g3(g1))}
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_report(out / "graph_metrics.csv", table)
    RunManifest(
        command=command, inputs=[str(edges)], out_dir=str(out), stages={"propgraph": True}, flags=flags
    ).write(out)
    print(format_metrics_table(table))
    return EXIT_OK


def cmd_graph_metrics(args) -> int:
    return _graph_metrics(Path(args.edges), Path(args.out), args.strict_parse, "graph-metrics", {})


# -- score -------------------------------------------------------------------

# categories counted as a correct recovery of each ground-truth policy
EXPECTED_CATEGORIES = {
    "strict": {6, 7},
    "depreference": {2, 3},
    "none": {1},
    "selective-customer": {1, 2, 3},
}


def cmd_score(args) -> int:
    analysis = Path(args.analysis)
    truth_file = Path(args.ground_truth) if args.ground_truth else analysis / "ground_truth.csv"
    report = read_classification_report(analysis / "classification.csv")["data"]
    truth = {}
    with open(truth_file, newline="") as fh:
        for row in csv.DictReader(fh):
            truth[int(row["asn"])] = row["policy"]
    out = Path(args.out) if args.out else analysis
    out.mkdir(parents=True, exist_ok=True)
    unknown = sorted(set(report) - set(truth))
    if unknown:
        log.warning("%d classified ASes missing from ground truth: %s", len(unknown), unknown[:20])
    policies = sorted(set(truth.values()))
    confusion = {p: [0] * 8 for p in policies}
    for asn, row in report.items():
        if asn in truth:
            confusion[truth[asn]][row["category"]] += 1
    with open(out / "scorecard.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", *(f"C{c}" for c in range(1, 8))])
        for p in policies:
            w.writerow([p, *confusion[p][1:]])
    lines = [f"observed ASes: {len(report)}; ground truth ASes: {len(truth)}; unmatched: {len(unknown)}"]
    for p in policies:
        expected = EXPECTED_CATEGORIES.get(p, set())
        tp = sum(confusion[p][c] for c in expected)
        observed = sum(confusion[p][1:])
        predicted = sum(confusion[q][c] for q in policies for c in expected)
        recall = f"{tp / observed:.3f}" if observed else "n/a"
        precision = f"{tp / predicted:.3f}" if predicted else "n/a"
        lines.append(
            f"{p:>20}: observed {observed:4d}, in {sorted(expected)}: {tp:4d}, "
            f"recall {recall}, precision {precision}"
        )
    strict_bad = sum(confusion.get("strict", [0] * 8)[c] for c in (1, 2, 3))
    lines.append(f"strict ASes in C1-C3: {strict_bad}")
    (out / "scorecard.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rovscope", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the two-configuration experiment on a scenario")
    p.add_argument("scenario", help=f"scenario JSON file or built-in name ({', '.join(BUILTIN_SCENARIOS)})")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="ingest, classify, correlate and build graph reports")
    p.add_argument("input", help="artifact directory (or an edge-list file with --graphs-only)")
    p.add_argument("--out", required=True)
    p.add_argument("--enforcing-set", choices=("c67", "c367"), default="c67")
    p.add_argument("--threshold-paths", type=float, default=0.10)
    p.add_argument("--threshold-routers", type=float, default=0.10)
    p.add_argument("--strict-parse", action="store_true")
    p.add_argument("--graphs-only", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("score", help="compare an analysis against simulator ground truth")
    p.add_argument("analysis")
    p.add_argument("--ground-truth")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("graph-metrics", help="metrics for an edge-list file")
    p.add_argument("edges")
    p.add_argument("--out", required=True)
    p.add_argument("--strict-parse", action="store_true")
    p.set_defaults(func=cmd_graph_metrics)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s", stream=sys.stderr
    )
    try:
        return args.func(args)
    except (InvariantViolation, NonConvergence, AssertionError) as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    except (MalformedRecord, ScenarioError, FileNotFoundError, EmptyGraph, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
