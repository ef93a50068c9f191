"""Two-stage training.

Stage 1 fits the voxel-head projection under MSE with the extractor fully
frozen and the PCA output stage fixed from train-split targets; the
alignment weight is forced to 0. Stage 2 resumes from the best stage-1
checkpoint, unfreezes the last N extractor blocks plus the alignment
matrix, and optimizes MSE + lambda * InfoNCE on a shared batch.

Optimizer: adaptive-moment update (beta1=0.9, beta2=0.999, eps=1e-8) with
decoupled weight decay applied to weight matrices only, never to biases or
the PCA stage. Only trainable tensors are handed to the optimizer, so
frozen tensors stay bitwise unchanged through any number of steps.

Checkpoint selection: highest validation metric m across epochs (first
epoch wins ties). Batches come from a fresh seeded shuffle each epoch with
the last partial batch kept; every random draw flows from the config seed
through fixed-offset Philox streams, so a full run is bit-deterministic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .config import TrainConfig, desk_stage1
from .dataset import Dataset, SplitSpec, rng_from_seed, split_dataset
from .errors import PreconditionError, TrainingDivergedError, ValidationError
from .evaluation import noise_normalized_score, r2_per_vertex
from .losses import AlignConfig, LossValue, alignment_loss, mse_loss, total_loss
from .model import (
    Checkpoint,
    ModelParams,
    align_backward,
    align_scores,
    apply_freeze,
    build_model,
    copy_model,
    extract_backward,
    forward_extract,
    head_backward,
    predict_voxels,
    stage1_freeze_mask,
    stage2_freeze_mask,
    trainable_names,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Seed offsets for the per-run Philox streams (init streams live in model.py).
_TRAIN_LOOP_SEED_OFFSET = 3


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_m: float
    seconds: float


@dataclass
class TrainRecord:
    epochs: list[EpochStats]
    best_epoch: int

    def log_lines(self) -> list[str]:
        return [
            f"{e.epoch} {e.train_loss!r} {e.val_m!r} {e.seconds:.3f}" for e in self.epochs
        ]

    @property
    def best_val_m(self) -> float:
        return self.epochs[self.best_epoch].val_m


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def empty(cls) -> "AdamState":
        return cls(step=0, m={}, v={})


def _decayed(name: str) -> bool:
    return name.endswith(".weight") or name == "align.W"


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> None:
    """One in-place adaptive-moment update over the given tensors.

    Pass only trainable tensors: anything present here gets moved (weight
    matrices also feel the decoupled decay term -lr*wd*theta)."""
    for name in grads:
        if not np.all(np.isfinite(grads[name])):
            raise TrainingDivergedError(f"non-finite gradient in '{name}'")
    state.step += 1
    t = state.step
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for name in sorted(params):
        theta = params[name]
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if cfg.weight_decay > 0.0 and _decayed(name):
            theta -= cfg.learning_rate * cfg.weight_decay * theta


def loss_and_grads(
    model: ModelParams,
    features: np.ndarray,
    text: np.ndarray,
    targets: np.ndarray,
    acfg: AlignConfig,
    mode: str = "train",
    rng: np.random.Generator | None = None,
) -> LossValue:
    """Forward + full manual backward pass; gradients cover every parameter
    tensor (alignment gradient is zero when lambda is 0)."""
    cache_e: dict = {}
    feature = forward_extract(model.extractor, features, mode=mode, rng=rng, cache=cache_e)
    cache_h: dict = {}
    voxels = predict_voxels(model.head, feature, mode=mode, rng=rng, cache=cache_h)
    mse = mse_loss(voxels, targets)

    if acfg.lambda_ > 0.0:
        cache_a: dict = {}
        scores = align_scores(model.align, text, feature, cache=cache_a)
        align = alignment_loss(scores, acfg)
        combined = total_loss(mse, align, acfg)
        dW, dfeat_align = align_backward(
            model.align, cache_a, acfg.lambda_ * align.gradients["scores"]
        )
    else:
        combined = total_loss(mse, LossValue(0.0, {}), acfg)
        dW = np.zeros_like(model.align.W)
        dfeat_align = 0.0

    head_grads, dfeat_mse = head_backward(model.head, cache_h, mse.gradients["pred"])
    dfeature = dfeat_mse + dfeat_align
    grads = extract_backward(model.extractor, cache_e, dfeature)
    grads.update(head_grads)
    grads["align.W"] = dW
    return LossValue(value=combined.value, gradients=grads)


def make_loss_fn(
    model: ModelParams,
    features: np.ndarray,
    text: np.ndarray,
    targets: np.ndarray,
    acfg: AlignConfig,
    trainable: list[str],
):
    """Closure for grad_check: maps a dict of trainable tensors to the loss
    at those values, dropout off (eval mode keeps the loss smooth)."""

    def fn(params: dict[str, np.ndarray]) -> LossValue:
        for name, value in params.items():
            model.set_tensor(name, value)
        out = loss_and_grads(model, features, text, targets, acfg, mode="eval")
        out.gradients = {n: out.gradients[n] for n in trainable}
        return out

    return fn


def validation_m(model: ModelParams, ds: Dataset, idx: np.ndarray) -> float:
    feature = forward_extract(model.extractor, ds.image_features[idx], mode="eval")
    pred = predict_voxels(model.head, feature, mode="eval")
    if not np.all(np.isfinite(pred)):
        raise TrainingDivergedError("validation predictions are non-finite")
    r2 = r2_per_vertex(pred, ds.voxel_targets[idx])
    m, _, _ = noise_normalized_score(r2, ds.noise_ceiling)
    return m


def _batches(perm: np.ndarray, batch_size: int):
    for start in range(0, len(perm), batch_size):
        yield perm[start:start + batch_size]


def _run_training(
    model: ModelParams,
    mask: dict[str, bool],
    cfg: TrainConfig,
    ds: Dataset,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    acfg: AlignConfig,
    stage: int,
) -> tuple[Checkpoint, TrainRecord]:
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise PreconditionError("training requires nonempty train and validation splits")
    rng = rng_from_seed(cfg.seed + _TRAIN_LOOP_SEED_OFFSET)
    state = AdamState.empty()
    tensors = model.named_tensors()
    trainable = trainable_names(mask)

    best_m = -math.inf
    best_epoch = -1
    best_model: ModelParams | None = None
    best_rng_state: dict | None = None
    stats: list[EpochStats] = []

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(train_idx)
        losses, sizes = [], []
        for step, batch in enumerate(_batches(perm, cfg.batch_size)):
            out = loss_and_grads(
                model,
                ds.image_features[batch],
                ds.text_embeddings[batch],
                ds.voxel_targets[batch],
                acfg,
                mode="train",
                rng=rng,
            )
            if not np.isfinite(out.value):
                raise TrainingDivergedError(
                    f"stage {stage} epoch {epoch} step {step}: loss is {out.value}"
                )
            grads = apply_freeze(mask, out.gradients)
            optimizer_step(
                {n: tensors[n] for n in trainable},
                {n: grads[n] for n in trainable},
                state,
                cfg,
            )
            losses.append(out.value)
            sizes.append(len(batch))
        train_loss = float(np.average(losses, weights=sizes))
        val_m = validation_m(model, ds, val_idx)
        stats.append(
            EpochStats(epoch=epoch, train_loss=train_loss, val_m=val_m,
                       seconds=time.perf_counter() - t0)
        )
        if val_m > best_m:
            best_m = val_m
            best_epoch = epoch
            best_model = copy_model(model)
            best_rng_state = dict(rng.bit_generator.state)

    assert best_model is not None
    ckpt = Checkpoint(
        stage=stage,
        epoch=best_epoch,
        model=best_model,
        config=cfg,
        best_val_m=best_m,
        rng_state=best_rng_state,
    )
    return ckpt, TrainRecord(epochs=stats, best_epoch=best_epoch)


def train_stage1(
    cfg: TrainConfig,
    ds: Dataset,
    split: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> tuple[Checkpoint, TrainRecord]:
    """Fit the voxel head under MSE; the PCA output stage is initialized
    from the train-split targets and the extractor never moves."""
    if cfg.stage != 1:
        raise PreconditionError(f"train_stage1: config has stage={cfg.stage}")
    train_idx, val_idx, _ = split
    if len(train_idx) == 0:
        raise PreconditionError("train_stage1: empty train split")
    model = build_model(
        d_img=ds.manifest.d_img,
        d_text=ds.manifest.d_text,
        train_targets=ds.voxel_targets[train_idx],
        cfg=cfg,
    )
    mask = stage1_freeze_mask(model)
    acfg = AlignConfig(tau=cfg.tau, lambda_=0.0)
    return _run_training(model, mask, cfg, ds, train_idx, val_idx, acfg, stage=1)


def train_stage2(
    cfg: TrainConfig,
    stage1_ckpt: Checkpoint,
    ds: Dataset,
    split: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> tuple[Checkpoint, TrainRecord]:
    """Resume from the best stage-1 checkpoint: unfreeze the last N
    extractor blocks and the alignment matrix, keep the voxel head and the
    remaining blocks frozen, optimize MSE + lambda * InfoNCE."""
    if cfg.stage != 2:
        raise PreconditionError(f"train_stage2: config has stage={cfg.stage}")
    if stage1_ckpt.stage != 1:
        raise ValidationError(
            f"train_stage2: expected a stage-1 checkpoint, got stage={stage1_ckpt.stage}"
        )
    train_idx, val_idx, _ = split
    model = copy_model(stage1_ckpt.model)
    model.head.dropout_rate = cfg.dropout_rate
    mask = stage2_freeze_mask(model, cfg.unfreeze_last_n_blocks)
    acfg = AlignConfig(tau=cfg.tau, lambda_=cfg.lambda_)
    return _run_training(model, mask, cfg, ds, train_idx, val_idx, acfg, stage=2)


# ---------------------------------------------------------------------------
# Lambda ablation
# ---------------------------------------------------------------------------

@dataclass
class AblationReport:
    rows: list[tuple[float, int, float]]      # (lambda, seed, m)
    medians: dict[float, float]               # lambda -> median m
    ordering: list[float]                     # lambdas sorted by median, best first

    def to_csv_text(self) -> str:
        lines = ["kind,lambda,seed,m"]
        for lam, seed, m in self.rows:
            lines.append(f"result,{lam!r},{seed},{m!r}")
        for lam in self.medians:
            lines.append(f"median,{lam!r},,{self.medians[lam]!r}")
        return "\n".join(lines) + "\n"


def run_lambda_ablation(
    base_cfg: TrainConfig,
    ds: Dataset,
    lambdas: list[float],
    seeds: list[int],
    stage1_cfg: TrainConfig | None = None,
    split_spec: SplitSpec | None = None,
    csv_path=None,
) -> AblationReport:
    """Stage-2 sweep over lambda values from one shared stage-1 checkpoint.

    base_cfg is the stage-2 template; each (lambda, seed) pair reruns
    stage 2 with those fields replaced. The stage-1 run defaults to the
    desk preset at the base config's seed/batch/pca_k.
    """
    if not lambdas or not seeds:
        raise PreconditionError("run_lambda_ablation: lambdas and seeds must be nonempty")
    if base_cfg.stage != 2:
        raise PreconditionError("run_lambda_ablation: base_cfg must be a stage-2 config")
    if stage1_cfg is None:
        stage1_cfg = desk_stage1(
            seed=base_cfg.seed, batch_size=base_cfg.batch_size, pca_k=base_cfg.pca_k
        )
    if split_spec is None:
        split_spec = SplitSpec(seed=base_cfg.seed)
    split = split_dataset(ds, split_spec)
    ckpt1, _ = train_stage1(stage1_cfg, ds, split)

    rows: list[tuple[float, int, float]] = []
    for lam in lambdas:
        for seed in seeds:
            cfg = replace(base_cfg, lambda_=lam, seed=seed)
            ckpt2, _ = train_stage2(cfg, ckpt1, ds, split)
            rows.append((lam, seed, ckpt2.best_val_m))
    medians = {
        lam: float(np.median([m for l, _, m in rows if l == lam])) for lam in lambdas
    }
    ordering = sorted(lambdas, key=lambda l: -medians[l])
    report = AblationReport(rows=rows, medians=medians, ordering=ordering)
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv_text())
    return report
