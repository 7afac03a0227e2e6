#!/usr/bin/env python3
"""
Main entry point for the blended-label matting pipeline
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from analysis.benchmark import DEFAULT_WARMUP, benchmark_checkpoint, benchmark_preset  # noqa: E402
from analysis.metrics import append_summary_rows, evaluate_dataset, write_report  # noqa: E402
from analysis.plot_sweep import plot_sweep  # noqa: E402
from model.checkpoint import load_checkpoint  # noqa: E402
from pipeline.config import STAGES, load_config  # noqa: E402
from pipeline.sweep_pipeline import LAMBDA_GRID, AblationRunner, SweepRunner  # noqa: E402
from pipeline.train_pipeline import MattingPipeline  # noqa: E402
from utils.datasets import (compose_matte_batch, load_backgrounds, load_manifest,  # noqa: E402
                            load_matte_sample, write_image, write_label)
from utils.errors import InvalidInputError  # noqa: E402
from utils.toy_world import generate_toy_world  # noqa: E402

EXAMPLES = """
Examples:
  # Procedural toy data, then every training stage
  python run_pipeline.py make-toy-data
  python run_pipeline.py train all --set seg_n=64 --set mat_n=16

  # 2x2 sweep (3 cells) and its figures
  python run_pipeline.py sweep --seg-counts 0 64 --mat-counts 0 16
  python run_pipeline.py plot runs/experiment/results/sweep_results.csv

  # Throughput of the half-width small preset at 512x512
  python run_pipeline.py benchmark --preset small:0.5 --edge 512 --iters 20
"""


def _config(args):
    cfg = load_config(args.config, args.overrides, args.seed)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    return cfg


def cmd_make_toy_data(args):
    cfg = _config(args)
    toy = dataclasses.replace(cfg.toy, seed=args.seed) if args.seed is not None else cfg.toy
    world = generate_toy_world(toy, cfg.data.toy_root, overwrite=args.overwrite, quiet=args.quiet)
    print(f"✅ Toy world ready: {toy.n_matte} matte / {toy.n_seg} natural / "
          f"{toy.n_eval}+{toy.n_eval} eval / {toy.n_backgrounds} backgrounds")
    for name in ("matte_dir", "backgrounds_dir", "natural_dir", "eval_matte_dir", "eval_natural_dir"):
        print(f"   {name}: {getattr(world, name)}")
    return 0


def cmd_compose(args):
    """Composite a foreground+alpha directory over backgrounds into a matte-kind dataset"""
    cfg = _config(args)
    manifest = load_manifest(args.fg_dir, "matte_fg")
    backgrounds = load_backgrounds(args.bg_dir)
    samples = [load_matte_sample(e) for e in manifest.entries]
    out = Path(args.out_dir)
    for sample, (image, matte) in zip(samples, compose_matte_batch(samples, backgrounds, cfg.seed)):
        write_image(out / "images" / f"{sample.source_id}.png", image)
        write_label(out / "labels" / f"{sample.source_id}.png", matte)
    print(f"✅ Composed {len(samples)} images into {out}")
    return 0


def cmd_train(args):
    cfg = _config(args)
    pipeline = MattingPipeline(cfg, quiet=args.quiet)
    only = None if args.stage == "all" else args.stage
    result = pipeline.run_pipeline(only_stage=only, resume=args.resume)
    print(f"\n✅ Training completed ({result.final_stage})")
    print(f"📊 Results saved to: {pipeline.results_dir}/")
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    runner = SweepRunner(cfg, parallel_cells=args.parallel_cells, quiet=args.quiet)
    _, summary = runner.run_sweep(args.seg_counts, args.mat_counts)
    return 1 if summary["cells_failed"] else 0


def cmd_ablate(args):
    cfg = _config(args)
    if args.seg_n is not None:
        cfg.seg_n = args.seg_n
    if args.mat_n is not None:
        cfg.mat_n = args.mat_n
    cfg.output_dir = str(Path(cfg.output_dir) / "ablation")
    runner = AblationRunner(cfg.validate(), parallel_cells=args.parallel_cells, quiet=args.quiet)
    _, summary = runner.run_ablation(tuple(args.lambdas))
    return 1 if summary["cells_failed"] else 0


def _eval_sets(args, cfg):
    if not args.eval_set:
        return cfg.data.resolved().eval_sets
    sets = {}
    for item in args.eval_set:
        if "=" in item:
            name, path = item.split("=", 1)
        else:
            name, path = Path(item).name, item
        sets[name] = path
    return sets


def cmd_evaluate(args):
    cfg = _config(args)
    net, meta = load_checkpoint(args.checkpoint)
    out = Path(args.report_dir or Path(cfg.output_dir) / "evaluation")
    label = Path(args.checkpoint).stem
    for name, root in _eval_sets(args, cfg).items():
        report = evaluate_dataset(net, load_manifest(root, "matte"), cfg.eval, dataset_id=name,
                                  device=cfg.device)
        write_report(report, out / f"report_{label}_{name}.json")
        append_summary_rows([report], out / "metrics.csv", {"checkpoint": label})
        print(f"📊 {name}: MSE {report.mse_whole:.3f} SAD {report.sad_whole:.4f} "
              f"boundary MSE {report.mse_boundary} ({report.n_images} images)")
    return 0


def cmd_benchmark(args):
    cfg = _config(args)
    if bool(args.checkpoint) == bool(args.preset):
        raise InvalidInputError("give exactly one of --checkpoint or --preset")
    if args.checkpoint:
        report = benchmark_checkpoint(args.checkpoint, args.edge, args.iters, args.warmup,
                                      cfg.device, args.hardware)
    else:
        depth, _, mult = args.preset.partition(":")
        report = benchmark_preset(depth, float(mult or 1.0), args.edge, args.iters, args.warmup,
                                  cfg.device, args.hardware)

    print(f"⏱️ {report.source} @ {report.edge}x{report.edge} on {report.hardware or report.device}")
    print(f"   {report.images_per_sec:.2f} img/s, latency p50 {report.latency_ms_p50:.1f} ms, "
          f"p90 {report.latency_ms_p90:.1f} ms, p99 {report.latency_ms_p99:.1f} ms "
          f"({report.timed_iters} timed, {report.warmup_iters} warmup)")
    if args.json:
        Path(args.json).parent.mkdir(parents=True, exist_ok=True)
        with open(args.json, "w") as f:
            json.dump(report.to_dict(), f, indent=2)
    return 0


def cmd_plot(args):
    paths = plot_sweep(args.csv, args.figures_dir)
    for p in paths:
        print(f"📈 {p}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML experiment config')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override a config key (repeatable), e.g. --set stages.student_mlb.iterations=50')
    common.add_argument('--seed', type=int, help='Override the experiment seed')
    common.add_argument('--output-dir', help='Output directory (default: $BLENDMAT_OUTPUT_ROOT/experiment)')
    common.add_argument('--quiet', action='store_true', help='Log to files only')

    parser = argparse.ArgumentParser(
        description='Blended-label matting pipeline - teacher/student training on coarse masks',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EXAMPLES,
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('make-toy-data', parents=[common], help='Generate the procedural toy world')
    p.add_argument('--overwrite', action='store_true', help='Replace an existing toy world')
    p.set_defaults(func=cmd_make_toy_data)

    p = sub.add_parser('compose', parents=[common], help='Composite foregrounds over backgrounds')
    p.add_argument('fg_dir', help='matte_fg dataset directory (images/ + labels/)')
    p.add_argument('bg_dir', help='Background image directory')
    p.add_argument('out_dir', help='Output matte dataset directory')
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser('train', parents=[common], help='Train one stage or the whole pipeline')
    p.add_argument('stage', choices=STAGES + ('all',))
    p.add_argument('--resume', help='Checkpoint of an interrupted stage')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('sweep', parents=[common], help='Train every (seg_n, mat_n) cell')
    p.add_argument('--seg-counts', type=int, nargs='+', required=True)
    p.add_argument('--mat-counts', type=int, nargs='+', required=True)
    p.add_argument('--parallel-cells', type=int, default=1, help='Cells trained concurrently')
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('ablate', parents=[common], help='Weak-strong x EMA and boundary-weight ablation')
    p.add_argument('--seg-n', type=int)
    p.add_argument('--mat-n', type=int)
    p.add_argument('--lambdas', type=float, nargs='+', default=list(LAMBDA_GRID))
    p.add_argument('--parallel-cells', type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser('evaluate', parents=[common], help='Evaluate a checkpoint')
    p.add_argument('checkpoint')
    p.add_argument('--eval-set', action='append', metavar='[NAME=]DIR',
                   help='Matte dataset to evaluate (repeatable; default: config eval sets)')
    p.add_argument('--report-dir', help='Where reports are written')
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('benchmark', parents=[common], help='Measure inference throughput')
    p.add_argument('--checkpoint')
    p.add_argument('--preset', help='encoder_depth:width_multiplier, e.g. small:0.5 or large:1')
    p.add_argument('--edge', type=int, default=512)
    p.add_argument('--iters', type=int, default=10)
    p.add_argument('--warmup', type=int, default=DEFAULT_WARMUP)
    p.add_argument('--hardware', default='', help='Hardware descriptor printed with the report')
    p.add_argument('--json', help='Write the report as JSON')
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser('plot', parents=[common], help='Figures from a sweep CSV')
    p.add_argument('csv')
    p.add_argument('--figures-dir')
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        status = args.func(args)
    except KeyboardInterrupt:
        print("\n🛑 Interrupted by user")
        status = 130
    except Exception as e:
        print(f"❌ Error: {e}")
        status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
