#!/usr/bin/env python3
"""
SDAVS command line interface

Subcommands: gen, train, eval, ablate, inspect, plot. Exit codes: 0 ok,
1 other failure, 2 configuration error, 3 numeric failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv
from pydantic import ValidationError

from .ablation import parse_grid, run_ablation
from .checkpoint import read_container
from .config import RunConfig, get_config
from .data import export_wavs, generate_dataset, load_dataset, save_dataset
from .errors import ConfigError, NonFiniteError, SDAVSError
from .evaluation import SegmentationEvaluator, noise_condition
from .model import load_checkpoint
from .tensor import no_grad
from .trainer import SDAVSTrainer
from .visualize import plot_feature_maps, plot_mask_overlay, plot_training_curves

logger = logging.getLogger(__name__)

EPILOG = """
Examples:
  sdavs gen --seed 0 --count 200 --out data/train.sdavs --wav-dir data/wav
  sdavs train --config run.json --out runs/full/model.sdavs
  sdavs eval --ckpt runs/full/model.sdavs --noise brownian --scale 0.1 --report reports/brownian.json
  sdavs ablate --grid "snrp=pre,off;seeds=0,1,2;noise=brownian" --out runs/ablation
  sdavs inspect --ckpt runs/full/model.sdavs
  sdavs plot --log runs/full/train_log.csv --out runs/full/curves.png
  sdavs plot --data data/eval.sdavs --features --ckpt runs/full/model.sdavs --out runs/full/maps.png
"""


def _load_run_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return get_config().run_config()
    return RunConfig.from_json(path)


def cmd_gen(args) -> int:
    cfg = _load_run_config(args.config)
    count = args.count or (cfg.train_clips if args.split == 'train' else cfg.eval_clips)
    dataset = generate_dataset(args.seed, args.split, count, cfg.height, cfg.width, cfg.frames,
                               n_jobs=args.jobs or get_config().THREADS)
    save_dataset(dataset, args.out)
    print(f"✅ Wrote {len(dataset)} {args.split} clips to {args.out}")
    if args.wav_dir:
        paths = export_wavs(dataset, args.wav_dir)
        print(f"🔊 Exported {len(paths)} WAV files to {args.wav_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config)
    out = Path(args.out)
    train_set = load_dataset(args.data) if args.data else None
    trainer = SDAVSTrainer(cfg, out.parent, n_jobs=args.jobs, train_set=train_set, checkpoint_name=out.name)
    trainer.run_complete_pipeline()
    print(f"\n✅ Training completed successfully!")
    print(f"📁 Checkpoint: {trainer.checkpoint_path}")
    print(f"📚 Report: {trainer.output_dir / 'TRAINING_REPORT.md'}")
    return 0


def cmd_eval(args) -> int:
    expected = RunConfig.from_json(args.config) if args.config else None
    evaluator = SegmentationEvaluator.from_checkpoint(args.ckpt, expected=expected, force=args.force)
    cfg = evaluator.config
    if args.data:
        dataset = load_dataset(args.data)
    else:
        dataset = generate_dataset(cfg.seed, 'eval', cfg.eval_clips, cfg.height, cfg.width, cfg.frames,
                                   n_jobs=args.jobs or get_config().THREADS)

    kind, scale = noise_condition(args.noise, args.scale)
    report = evaluator.evaluate(dataset, kind, scale, n_jobs=args.jobs, timing=args.timing)
    if kind != 'clean':
        clean = evaluator.evaluate(dataset, 'clean', n_jobs=args.jobs)
        report.compare_to(clean)
        print(f"📉 Degradation (clean − {kind}): J&F {report.degradation['J&F']:+.4f}")
    print(f"📊 J {report.aggregates['J']:.4f}  F {report.aggregates['F']:.4f}  J&F {report.aggregates['J&F']:.4f}")
    if report.consistency_before and report.consistency_after:
        before, after = report.consistency_before, report.consistency_after
        print(f"🔗 CKA {before.cka:.4f} -> {after.cka:.4f}  KL {before.kl:.4f} -> {after.kl:.4f}  "
              f"JS {before.js:.4f} -> {after.js:.4f}")
    if args.report:
        csv_path, json_path = report.write(args.report)
        print(f"💾 Report: {csv_path}, {json_path}")
    return 0


def cmd_ablate(args) -> int:
    base = _load_run_config(args.config)
    out = Path(args.out) if args.out else get_config().OUTPUT_DIR / 'ablation'
    summary = run_ablation(base, parse_grid(args.grid), out, n_jobs=args.jobs, noise_scale=args.scale)
    print(summary.to_string(index=False))
    return 0


def cmd_inspect(args) -> int:
    tensors, metadata = read_container(args.ckpt)
    print(f"📦 {args.ckpt}")
    for key in sorted(metadata):
        if key != 'config':
            print(f"   {key}: {metadata[key]}")
    print(f"\n🔢 {len(tensors)} tensors")
    for name, array in tensors.items():
        print(f"   {name:<60} {tuple(array.shape)}")
    if 'config' in metadata:
        model = load_checkpoint(args.ckpt).build_model()
        print("\n🧮 Parameters per component")
        for name, count in model.component_parameters().items():
            print(f"   {name:<24} {count:>10,}")
    return 0


def cmd_plot(args) -> int:
    if args.log:
        plot_training_curves(args.log, args.out)
        print(f"📈 Saved curves: {args.out}")
    if args.data:
        clip = load_dataset(args.data)[args.clip]
        overlay = Path(args.out).with_name(Path(args.out).stem + f'_clip{args.clip:04d}.png')
        plot_mask_overlay(clip.frames, clip.gt_masks, overlay)
        print(f"🖼️ Saved overlay: {overlay}")
    if args.features:
        _plot_features(args)
    if not args.log and not args.data:
        raise ConfigError("plot needs --log and/or --data")
    return 0


def _plot_features(args):
    if not args.ckpt or not args.data:
        raise ConfigError("plot --features needs --ckpt and --data")
    model = load_checkpoint(args.ckpt).build_model()
    dataset = load_dataset(args.data)
    frames, spectrograms, gt = dataset.batch([args.clip])
    with no_grad():
        stages = model(frames, spectrograms).stages
    clip = dataset[args.clip]
    for j, stage in enumerate(stages, start=1):
        path = Path(args.out).with_name(Path(args.out).stem + f'_clip{args.clip:04d}_stage{j}.png')
        plot_feature_maps(stage, clip.frames, gt[0], path, frame=args.frame)
        print(f"🔥 Saved stage {j} features: {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='sdavs',
        description="Audio-visual segmentation with selective noise-resilient fusion on synthetic scenes",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument('--log-level', help='Override SDAVS_LOG_LEVEL (DEBUG, INFO, WARNING, ...)')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen', help='Generate a synthetic dataset container')
    gen.add_argument('--seed', type=int, default=0, help='Dataset seed')
    gen.add_argument('--split', choices=['train', 'eval'], default='train')
    gen.add_argument('--count', type=int, help='Number of clips (default from the run config)')
    gen.add_argument('--config', help='RunConfig JSON supplying clip sizes')
    gen.add_argument('--out', required=True, help='Output dataset container')
    gen.add_argument('--wav-dir', help='Also export every clip as a 16-bit WAV file')
    gen.add_argument('--jobs', type=int, help='Parallel workers (default SDAVS_THREADS)')
    gen.set_defaults(func=cmd_gen)

    train = sub.add_parser('train', help='Train one configuration')
    train.add_argument('--config', help='RunConfig JSON (default: environment defaults)')
    train.add_argument('--out', required=True, help='Checkpoint path; logs and reports go next to it')
    train.add_argument('--data', help='Use a dataset container instead of generating one')
    train.add_argument('--jobs', type=int, help='Parallel workers for data generation')
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser('eval', help='Evaluate a checkpoint on clean or noisy audio')
    ev.add_argument('--ckpt', required=True)
    ev.add_argument('--noise', choices=['none', 'clean', 'brownian', 'chirp_train'], default='none')
    ev.add_argument('--scale', type=float, default=0.1, help='Noise RMS relative to the signal RMS')
    ev.add_argument('--report', help='Report path; writes <stem>.csv and <stem>.json')
    ev.add_argument('--data', help='Dataset container (default: regenerate the eval split)')
    ev.add_argument('--config', help='Expected RunConfig; a hash mismatch is an error')
    ev.add_argument('--force', action='store_true', help='Load despite a config hash mismatch')
    ev.add_argument('--timing', action='store_true', help='Record wall-clock and frames/s in the report')
    ev.add_argument('--jobs', type=int)
    ev.set_defaults(func=cmd_eval)

    ablate = sub.add_parser('ablate', help='Train and evaluate a grid of configurations')
    ablate.add_argument('--grid', required=True, help='JSON file/object or "key=v1,v2;seeds=0,1;noise=brownian"')
    ablate.add_argument('--config', help='Base RunConfig JSON')
    ablate.add_argument('--out', help='Output directory (default OUTPUT_DIR/ablation)')
    ablate.add_argument('--scale', type=float, help='Noise scale (default from the run config)')
    ablate.add_argument('--jobs', type=int)
    ablate.set_defaults(func=cmd_ablate)

    inspect = sub.add_parser('inspect', help='List checkpoint tensors and parameter counts')
    inspect.add_argument('--ckpt', required=True)
    inspect.set_defaults(func=cmd_inspect)

    plot = sub.add_parser('plot', help='Render training curves, mask overlays and feature maps')
    plot.add_argument('--log', help='train_log.csv written by train')
    plot.add_argument('--data', help='Dataset container for a mask overlay')
    plot.add_argument('--clip', type=int, default=0, help='Clip index for the overlay and feature maps')
    plot.add_argument('--features', action='store_true', help='Also plot per-stage SNRP/DAMF feature maps')
    plot.add_argument('--ckpt', help='Checkpoint for --features')
    plot.add_argument('--frame', type=int, default=0, help='Frame index for --features')
    plot.add_argument('--out', required=True, help='Output PNG')
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function with command line interface"""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        env = get_config()
        logging.basicConfig(level=(args.log_level or env.LOG_LEVEL).upper(), format=env.LOG_FORMAT)
        return args.func(args)
    except ValidationError as exc:
        print(f"❌ Configuration error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except NonFiniteError as exc:
        print(f"❌ Numeric failure: {exc}", file=sys.stderr)
        return NonFiniteError.exit_code
    except SDAVSError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
