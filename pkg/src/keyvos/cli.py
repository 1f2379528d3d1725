"""Command line entry point: run, eval, render, synth, search."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import generate_scenario, load_scenario_spec, load_search_space, search_hyperparams
from .errors import KeyvosError
from .fileio import load_label_maps, load_result, load_sequence, save_result, save_sequence
from .metrics import evaluate
from .pipeline import PipelineConfig, SequenceRunner, load_config, render_overlay, save_config


def _config(path):
    return load_config(path) if path else PipelineConfig()


def cmd_run(args):
    config = _config(args.config)
    out = args.out or config.output_dir
    if not out:
        raise KeyvosError("no output directory: pass --out or set output_dir in the config")
    seq = load_sequence(args.input)
    result = SequenceRunner(seq, config).run()
    save_result(result, out)
    print(f"{len(result.instance_ids)} instances over {len(result.label_maps)} frames -> {out}")


def cmd_eval(args):
    config = _config(args.config)
    pred = load_label_maps(args.pred)
    gt = load_label_maps(args.gt)
    tol = args.tolerance if args.tolerance is not None else config.boundary_tolerance
    report = evaluate(pred, gt, tol)
    print(report.format_table())
    out = Path(args.out) if args.out else Path(args.pred) / "report.txt"
    out.write_text(report.format_keyvalue())


def cmd_render(args):
    render_overlay(load_result(args.result), args.frame, args.out)


def cmd_synth(args):
    spec = load_scenario_spec(args.spec)
    seq, _ = generate_scenario(spec)
    save_sequence(seq, args.out)
    print(f"{seq.frame_count} frames, {sum(len(f) for f in seq.candidates)} candidates -> {args.out}")


def cmd_search(args):
    space = load_search_space(args.space, trials=args.trials, seed=args.seed)
    dirs = sorted(p for p in Path(args.scenarios).iterdir() if (p / "manifest.txt").exists())
    if not dirs:
        raise KeyvosError(f"no sequence directories under {args.scenarios}")
    scenarios = []
    for d in dirs:
        seq = load_sequence(d)
        if seq.ground_truth is None:
            raise KeyvosError(f"{d} has no gt/ directory")
        scenarios.append(seq)
    outcome = search_hyperparams(space, scenarios, _config(args.config), workers=args.workers)
    out = Path(args.out)
    save_config(outcome.best_config, out)
    log = out.with_name(out.stem + "_trials.txt")
    log.write_text(outcome.format_log())
    print(f"best trial {outcome.best_index}: global_mean {outcome.best_score:.4f} -> {out} (log {log})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="keyvos", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="track one sequence")
    p.add_argument("--input", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="J/F report for predicted vs ground-truth label maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--config")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--out", help="key: value report file (default <pred>/report.txt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="write one frame of a result as a PPM image")
    p.add_argument("--input", help="sequence directory (accepted for symmetry; the image uses label maps only)")
    p.add_argument("--result", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("search", help="seeded random hyperparameter search")
    p.add_argument("--space", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="base config for the parameters not searched")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (KeyvosError, OSError, IndexError) as exc:
        print(f"keyvos {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
