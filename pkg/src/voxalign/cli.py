"""Command-line entry point.

Subcommands: gen-synth, train, eval, ablate, grad-check, validate-data.
Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage
error. Every random choice flows from --seed (or the config seed); no
subcommand mutates its input dataset directory.

Config resolution for train/ablate/grad-check: preset defaults (--preset,
desk by default), then config-file values, then explicit CLI flags.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import TrainConfig
from .dataset import (
    SplitSpec,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    split_dataset,
    write_dataset,
    write_ground_truth,
)
from .errors import VoxalignError
from .evaluation import evaluate_predictions, emit_report
from .losses import AlignConfig, grad_check_report
from .model import (
    build_model,
    load_checkpoint,
    save_checkpoint,
    stage1_freeze_mask,
    stage2_freeze_mask,
    trainable_names,
)
from .trainer import make_loss_fn, run_lambda_ablation, train_stage1, train_stage2

GRAD_CHECK_THRESHOLD = 1e-5

_CONFIG_FLAGS = (
    ("--epochs", int, "epochs"),
    ("--batch-size", int, "batch_size"),
    ("--learning-rate", float, "learning_rate"),
    ("--weight-decay", float, "weight_decay"),
    ("--dropout-rate", float, "dropout_rate"),
    ("--lambda", float, "lambda"),
    ("--tau", float, "tau"),
    ("--seed", int, "seed"),
    ("--unfreeze-last-n-blocks", int, "unfreeze_last_n_blocks"),
    ("--pca-k", int, "pca_k"),
)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    for flag, typ, key in _CONFIG_FLAGS:
        p.add_argument(flag, type=typ, dest=f"cfg_{key.replace('-', '_')}", default=None,
                       metavar=key.upper())


def _resolve_config(args, stage: int) -> TrainConfig:
    preset = cfgmod.PRESETS[f"{args.preset}_stage{stage}"]()
    raw = preset.to_dict()
    if args.config is not None:
        raw.update(cfgmod.parse_config_text(Path(args.config).read_text(encoding="utf-8")))
    for _, _, key in _CONFIG_FLAGS:
        value = getattr(args, f"cfg_{key.replace('-', '_')}")
        if value is not None:
            raw[key] = value
    raw["stage"] = stage
    return TrainConfig.from_dict(raw)


def _write_log(record, path: Path):
    path.write_text("\n".join(record.log_lines()) + "\n", encoding="utf-8")


def cmd_gen_synth(args) -> int:
    spec = SyntheticSpec(
        n_samples=args.n_samples,
        latent_dim=args.latent_dim,
        d_img=args.d_img,
        d_text=args.d_text,
        n_vertices=args.n_vertices,
        noise_std_img=args.noise_std_img,
        noise_std_text=args.noise_std_text,
        noise_std_voxel=args.noise_std_voxel,
        seed=args.seed,
    )
    ds, gt = generate_synthetic(spec)
    write_dataset(ds, args.out)
    write_ground_truth(gt, args.out)
    m = ds.manifest
    print(
        f"wrote {args.out}: n_samples={m.n_samples} d_img={m.d_img} d_text={m.d_text} "
        f"n_vertices={m.n_vertices} value_width={m.value_width} subject_id={m.subject_id}"
    )
    return 0


def cmd_validate_data(args) -> int:
    ds = load_dataset(args.data)
    m = ds.manifest
    print(
        f"ok: n_samples={m.n_samples} d_img={m.d_img} d_text={m.d_text} "
        f"n_vertices={m.n_vertices} rois={len(m.roi_names)}"
    )
    return 0


def cmd_train(args, parser: argparse.ArgumentParser) -> int:
    if args.stage == 2 and args.from_ckpt is None:
        parser.error("--stage 2 requires --from CHECKPOINT")
    cfg = _resolve_config(args, args.stage)
    ds = load_dataset(args.data)
    split = split_dataset(ds, SplitSpec(seed=cfg.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.stage == 1:
        ckpt, record = train_stage1(cfg, ds, split)
    else:
        ckpt1 = load_checkpoint(args.from_ckpt)
        ckpt, record = train_stage2(cfg, ckpt1, ds, split)
    save_checkpoint(ckpt, out / f"stage{args.stage}.ckpt")
    _write_log(record, out / f"stage{args.stage}.log")
    print(f"best validation m = {ckpt.best_val_m!r} (epoch {ckpt.epoch})")
    print(f"checkpoint: {out / f'stage{args.stage}.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if ds.manifest.d_img != ckpt.model.extractor.input_dim:
        print(
            f"error: dataset d_img={ds.manifest.d_img} does not match checkpoint "
            f"input_dim={ckpt.model.extractor.input_dim}",
            file=sys.stderr,
        )
        return 1
    if ds.manifest.n_vertices != ckpt.model.head.output_stage.d:
        print(
            f"error: dataset n_vertices={ds.manifest.n_vertices} does not match checkpoint "
            f"vertex count {ckpt.model.head.output_stage.d}",
            file=sys.stderr,
        )
        return 1
    split = split_dataset(ds, SplitSpec(seed=ckpt.config.seed))
    idx = {"train": split[0], "val": split[1], "test": split[2]}[args.split]
    pred = ckpt.predict(ds.image_features[idx])
    report = evaluate_predictions(
        pred,
        ds.voxel_targets[idx],
        ds.noise_ceiling,
        ds.roi_labels,
        ds.manifest.roi_names,
        nc_epsilon=args.nc_epsilon,
        clip_at_1=args.clip_at_1,
    )
    emit_report(report, args.out, format=args.format,
                roi_labels=ds.roi_labels, roi_names=ds.manifest.roi_names)
    print(f"overall m = {report.overall_m!r} ({args.split} split, "
          f"{report.n_excluded_vertices} vertices excluded)")
    for name in sorted(report.per_roi_median):
        print(f"  {name}: median {report.per_roi_median[name]!r}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args, 2)
    ds = load_dataset(args.data)
    lambdas = [float(s) for s in args.lambdas.split(",") if s.strip() != ""]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    report = run_lambda_ablation(cfg, ds, lambdas, seeds, csv_path=args.out)
    print(f"wrote {args.out}")
    for lam in lambdas:
        print(f"lambda={lam:g}: median m = {report.medians[lam]!r}")
    print("ordering (best first):", ", ".join(f"{l:g}" for l in report.ordering))
    return 0


def cmd_grad_check(args) -> int:
    ds = load_dataset(args.data)
    B = args.batch
    if B < 1:
        print("error: --batch must be >= 1", file=sys.stderr)
        return 1
    failures = []
    for stage in (1, 2):
        cfg = _resolve_config(args, stage)
        split = split_dataset(ds, SplitSpec(seed=cfg.seed))
        train_idx = split[0]
        model = build_model(
            ds.manifest.d_img, ds.manifest.d_text, ds.voxel_targets[train_idx], cfg
        )
        if stage == 1:
            mask = stage1_freeze_mask(model)
            acfg = AlignConfig(tau=cfg.tau, lambda_=0.0)
        else:
            mask = stage2_freeze_mask(model, cfg.unfreeze_last_n_blocks)
            acfg = AlignConfig(tau=cfg.tau, lambda_=cfg.lambda_)
        idx = train_idx[:B]
        trainable = trainable_names(mask)
        fn = make_loss_fn(
            model,
            ds.image_features[idx],
            ds.text_embeddings[idx],
            ds.voxel_targets[idx],
            acfg,
            trainable,
        )
        if args.corrupt_tensor is not None:
            fn = _corrupting(fn, args.corrupt_tensor)
        params = {n: model.named_tensors()[n] for n in trainable}
        report = grad_check_report(fn, params, epsilon=args.epsilon, seed=cfg.seed)
        print(f"stage {stage} loss configuration:")
        for name in sorted(report):
            status = "ok" if report[name] < GRAD_CHECK_THRESHOLD else "FAIL"
            print(f"  {name}: max rel error {report[name]:.3e} [{status}]")
            if report[name] >= GRAD_CHECK_THRESHOLD:
                failures.append(f"stage{stage}:{name}")
    if failures:
        print(f"gradient check failed for: {', '.join(failures)}", file=sys.stderr)
        return 1
    return 0


def _corrupting(fn, tensor_name: str):
    # Test hook: breaks one analytic gradient so the exceedance path is
    # exercised end to end.
    def wrapped(params):
        out = fn(params)
        if tensor_name in out.gradients:
            out.gradients[tensor_name] = out.gradients[tensor_name] + 1.0
        return out

    return wrapped


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxalign")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset + ground-truth sidecar")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--latent-dim", type=int, default=8)
    p.add_argument("--d-img", type=int, default=32)
    p.add_argument("--d-text", type=int, default=16)
    p.add_argument("--n-vertices", type=int, default=50)
    p.add_argument("--noise-std-img", type=float, default=0.5)
    p.add_argument("--noise-std-text", type=float, default=0.1)
    p.add_argument("--noise-std-voxel", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("validate-data", help="load and validate an interchange directory")
    p.add_argument("data", type=Path)
    p.set_defaults(func=cmd_validate_data)

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--from", dest="from_ckpt", type=Path,
                   help="stage-1 checkpoint (required for --stage 2)")
    p.add_argument("--out", type=Path, default=Path("."))
    _add_config_flags(p)
    p.set_defaults(func=None, _train=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--nc-epsilon", type=float, default=1e-6)
    p.add_argument("--clip-at-1", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="lambda sweep from a shared stage-1 checkpoint")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--lambdas", required=True, help="comma-separated lambda values")
    p.add_argument("--seeds", required=True, help="comma-separated seeds")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("grad-check", help="finite-difference check of analytic gradients")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--epsilon", type=float, default=5e-5)
    p.add_argument("--corrupt-tensor", default=None,
                   help="test hook: corrupt this tensor's analytic gradient")
    _add_config_flags(p)
    p.set_defaults(func=cmd_grad_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        if getattr(args, "_train", False):
            return cmd_train(args, parser)
        return args.func(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except VoxalignError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
