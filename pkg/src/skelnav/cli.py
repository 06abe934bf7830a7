"""Command-line interface.

Subcommands: ``run`` (execute episodes, one JSONL record per episode),
``eval`` (score records into a JSON/CSV report plus a summary figure),
``robustness`` (paired baseline/degraded runs), and ``plot`` (render one
record over its map).

Exit codes: 0 success, 2 bad input (manifest, bundle, records), 3 backend
failure (transport, protocol, or any episode marked failed).
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .backends import (ModelBackend, RemoteConfig, make_noisy_backend,
                       make_oracle_backend, make_remote_backend)
from .errors import EpisodeFailure, InputError, NavError, ProtocolError, TransportError
from .metrics import build_report
from .plotting import plot_episode, plot_metrics_summary, plot_robustness
from .regulator import (EpisodeConfig, backend_rng, read_record, replay_episode,
                        run_episode, write_record)
from .simenv import MapBundle, load_map_bundle
from .waypoint import DegreeConfig, WaypointConfig

DEFAULT_ENDPOINT = "http://127.0.0.1:8711/v1/complete"


def _add_common_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", required=True, help="map bundle directory")
    p.add_argument("--episodes", default=None,
                   help="comma-separated episode ids (default: all in bundle)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--views", type=int, default=12)
    p.add_argument("--min-steps", type=int, default=6)
    p.add_argument("--degree-config", choices=["deg1", "gt2", "ne2"],
                   default="deg1")
    p.add_argument("--perturb-magnitude", type=float, default=0.0)
    p.add_argument("--noise-scale", type=float, default=1.0,
                   help="choice-noise strength for the noisy mode")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skelnav",
        description="skeleton-guided instruction navigation in a synthetic world")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run episodes and write JSONL records")
    _add_common_run_flags(p_run)
    p_run.add_argument("--mode", choices=["oracle", "noisy", "remote", "replay"],
                       default="oracle")
    p_run.add_argument("--records", default=None,
                       help="directory of source records (replay mode)")
    p_run.add_argument("--endpoint", default=os.environ.get("SKELNAV_ENDPOINT",
                                                            DEFAULT_ENDPOINT))
    p_run.add_argument("--model", default="default")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score records into a metric report")
    p_eval.add_argument("--map", required=True)
    p_eval.add_argument("--records", required=True,
                        help="directory of JSONL records (or one file)")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_rob = sub.add_parser("robustness",
                           help="paired baseline/degraded runs and reports")
    _add_common_run_flags(p_rob)
    p_rob.add_argument("--protocol", choices=["views6", "perturb"], required=True)
    p_rob.add_argument("--mode", choices=["oracle", "noisy"], default="oracle")
    p_rob.set_defaults(func=cmd_robustness)

    p_plot = sub.add_parser("plot", help="render one record over its map")
    p_plot.add_argument("--record", required=True, help="episode JSONL file")
    p_plot.add_argument("--map", required=True)
    p_plot.add_argument("--out", required=True,
                        help="output SVG path or directory")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def _build_config(args, n_views=None, perturb=None) -> EpisodeConfig:
    return EpisodeConfig(
        min_steps=args.min_steps,
        n_views=args.views if n_views is None else n_views,
        waypoint=WaypointConfig(degree_config=DegreeConfig(args.degree_config)),
        perturb_magnitude=(args.perturb_magnitude if perturb is None else perturb),
    )


def _select_episodes(bundle: MapBundle, spec: str | None):
    if spec is None:
        return list(bundle.episodes)
    wanted = [s.strip() for s in spec.split(",") if s.strip()]
    by_id = {e.id: e for e in bundle.episodes}
    missing = [w for w in wanted if w not in by_id]
    if missing:
        raise InputError(f"unknown episode ids: {', '.join(missing)}")
    return [by_id[w] for w in wanted]


def _make_backend(args, episode_id: str) -> ModelBackend:
    if args.mode == "oracle":
        return make_oracle_backend()
    if args.mode == "noisy":
        return make_noisy_backend(args.noise_scale, backend_rng(args.seed, episode_id))
    if args.mode == "remote":
        return make_remote_backend(RemoteConfig(endpoint=args.endpoint,
                                                model=args.model))
    raise InputError(f"mode {args.mode!r} has no direct backend")


def _run_episodes(args, bundle, episodes, cfg, out_dir) -> int:
    """Run (or replay) episodes into out_dir; returns 3 on any failure."""
    os.makedirs(out_dir, exist_ok=True)
    failures = []

    def one(ep):
        if args.mode == "replay":
            if not args.records:
                raise InputError("replay mode needs --records")
            src = os.path.join(args.records, f"{ep.id}.jsonl")
            record = replay_episode(bundle.world, read_record(src))
        else:
            backend = _make_backend(args, ep.id)
            record = run_episode(bundle.world, ep, backend, cfg, args.seed)
        write_record(os.path.join(out_dir, f"{ep.id}.jsonl"), record)
        return record

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            records = list(pool.map(one, episodes))
    else:
        records = [one(ep) for ep in episodes]
    failures = [r.episode_id for r in records if r.failed]
    if failures:
        print(f"failed episodes: {', '.join(failures)}", file=sys.stderr)
        return 3
    return 0


def cmd_run(args) -> int:
    if args.mode == "remote":
        key_env = RemoteConfig(endpoint=args.endpoint).api_key_env
        if not os.environ.get(key_env):
            print(f"remote mode needs the auth token env var {key_env} to be set",
                  file=sys.stderr)
            return 3
    bundle = load_map_bundle(args.map)
    episodes = _select_episodes(bundle, args.episodes)
    cfg = _build_config(args)
    return _run_episodes(args, bundle, episodes, cfg, args.out)


def _load_records(records_arg: str):
    if os.path.isdir(records_arg):
        paths = sorted(glob.glob(os.path.join(records_arg, "*.jsonl")))
    elif os.path.exists(records_arg):
        paths = [records_arg]
    else:
        raise InputError(f"records path {records_arg!r} does not exist")
    if not paths:
        raise InputError(f"no .jsonl records under {records_arg!r}")
    return [read_record(p) for p in paths]


def _write_report_files(report: dict, out_dir, stem: str = "report") -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{stem}.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    fields = ["episode_id", "failed", "tl", "ne", "sr", "osr", "spl", "ndtw", "sdtw"]
    with open(os.path.join(out_dir, f"{stem}.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in report["episodes"]:
            writer.writerow({k: row[k] for k in fields})
        agg = dict(report["aggregate"])
        agg.update({"episode_id": "AGGREGATE", "failed": ""})
        writer.writerow({k: agg.get(k, "") for k in fields})


def cmd_eval(args) -> int:
    bundle = load_map_bundle(args.map)
    records = _load_records(args.records)
    report = build_report(bundle.world, records)
    _write_report_files(report, args.out)
    plot_metrics_summary(report, os.path.join(args.out, "metrics_summary.svg"))
    agg = report["aggregate"]
    print(" ".join(f"{k}={agg[k]:.4f}" for k in
                   ("sr", "osr", "spl", "ndtw", "sdtw", "tl", "ne")))
    return 0


def cmd_robustness(args) -> int:
    bundle = load_map_bundle(args.map)
    episodes = _select_episodes(bundle, args.episodes)
    if args.protocol == "views6":
        base_cfg = _build_config(args, n_views=12)
        deg_cfg = _build_config(args, n_views=6)
        labels = ("views12", "views6")
    else:
        magnitude = args.perturb_magnitude if args.perturb_magnitude > 0 else 0.5
        base_cfg = _build_config(args, perturb=0.0)
        deg_cfg = _build_config(args, perturb=magnitude)
        labels = ("no-perturb", f"perturb-{magnitude:g}m")

    codes = []
    reports = []
    for cfg, label in ((base_cfg, labels[0]), (deg_cfg, labels[1])):
        sub_out = os.path.join(args.out, label)
        codes.append(_run_episodes(args, bundle, episodes, cfg, sub_out))
        records = _load_records(sub_out)
        report = build_report(bundle.world, records)
        reports.append(report)
        _write_report_files(report, args.out, stem=f"{label}_report")
    base_agg, deg_agg = reports[0]["aggregate"], reports[1]["aggregate"]
    relative = {}
    for k in ("tl", "ne", "sr", "osr", "spl", "ndtw", "sdtw"):
        if base_agg[k] != 0.0:
            relative[k] = 100.0 * (deg_agg[k] - base_agg[k]) / base_agg[k]
        else:
            relative[k] = None
    combined = {
        "protocol": args.protocol,
        "seed": args.seed,
        "conditions": {labels[0]: base_agg, labels[1]: deg_agg},
        "relative_change_pct": relative,
    }
    with open(os.path.join(args.out, "robustness_report.json"), "w",
              encoding="utf-8") as fh:
        json.dump(combined, fh, indent=2, sort_keys=True)
        fh.write("\n")
    plot_robustness(reports[0], reports[1], labels,
                    os.path.join(args.out, "robustness.svg"))
    return max(codes) if codes else 0


def cmd_plot(args) -> int:
    record = read_record(args.record)
    bundle = load_map_bundle(args.map)
    out = args.out
    if os.path.isdir(out) or not out.endswith(".svg"):
        os.makedirs(out, exist_ok=True)
        out = os.path.join(out, f"{record.episode_id}.svg")
    plot_episode(bundle.world, record, out)
    print(out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TransportError, ProtocolError, EpisodeFailure) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except NavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
