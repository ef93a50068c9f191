"""The encoding model: feature-extractor block stack, voxel head with a
fixed PCA output stage, learnable alignment matrix, freeze masks, and
checkpoint persistence.

The extractor is a stack of affine blocks (identity or gelu activation)
over precomputed feature vectors; the model feature is the concatenation
of the configured tap outputs, mirroring multi-layer feature taps on a
frozen backbone. Block 0 of the default stack is identity-activated and
identity-initialized so a linear readout of the taps can always see the
raw input.

Every forward primitive has a matching backward that consumes the cache
produced by the forward; gradients are exact (erf-based gelu), which is
what lets finite-difference checks pass at 1e-6.

Parameter tensors are addressed by name:

    extractor.block{i}.weight / extractor.block{i}.bias
    head.projection.weight   / head.projection.bias
    align.W

The PCA output stage (head.pca.*) is serialized with checkpoints but is
never a parameter: it is fixed at init and no gradient ever reaches it.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .config import TrainConfig
from .errors import (
    CheckpointVersionError,
    CorruptCheckpointError,
    PreconditionError,
    ValidationError,
)
from .linalg import PcaModel, pca_fit

ACTIVATIONS = ("identity", "gelu")

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

CHECKPOINT_MAGIC = b"VOXALNCK"
CHECKPOINT_SCHEMA_VERSION = 1


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


@dataclass
class Block:
    weight: np.ndarray   # out_dim x in_dim
    bias: np.ndarray     # out_dim
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"Block: unknown activation '{self.activation}'")
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValidationError("Block: weight must be 2-D and bias 1-D")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValidationError("Block: bias length must equal weight output dim")


@dataclass
class ExtractorParams:
    blocks: list[Block]
    input_dim: int
    taps: tuple[int, ...]

    def __post_init__(self):
        self.taps = tuple(self.taps)
        prev = self.input_dim
        for i, b in enumerate(self.blocks):
            if b.weight.shape[1] != prev:
                raise ValidationError(
                    f"ExtractorParams: block {i} expects input dim {b.weight.shape[1]}, got {prev}"
                )
            prev = b.weight.shape[0]
        if not self.taps:
            raise ValidationError("ExtractorParams: need at least one tap")
        if any(t < 0 or t >= len(self.blocks) for t in self.taps):
            raise ValidationError("ExtractorParams: tap index out of range")
        if any(b >= a for a, b in zip(self.taps[1:], self.taps)):
            raise ValidationError("ExtractorParams: taps must be strictly increasing")

    @property
    def feature_dim(self) -> int:
        return sum(self.blocks[t].weight.shape[0] for t in self.taps)


@dataclass
class VoxelHead:
    projection: Block            # maps features to k PCA coefficients
    dropout_rate: float
    output_stage: PcaModel       # fixed after init

    def __post_init__(self):
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValidationError("VoxelHead: dropout_rate must be in [0, 1)")
        if self.projection.weight.shape[0] != self.output_stage.k:
            raise ValidationError("VoxelHead: projection output dim must equal PCA k")


@dataclass
class AlignmentMatrix:
    W: np.ndarray   # d_text x d_feat

    def __post_init__(self):
        if self.W.ndim != 2:
            raise ValidationError("AlignmentMatrix: W must be 2-D")
        if not np.all(np.isfinite(self.W)):
            raise ValidationError("AlignmentMatrix: W contains non-finite values")


@dataclass
class ModelParams:
    extractor: ExtractorParams
    head: VoxelHead
    align: AlignmentMatrix

    def named_tensors(self) -> dict[str, np.ndarray]:
        """All parameter tensors by name (the PCA stage is not a parameter)."""
        out = {}
        for i, b in enumerate(self.extractor.blocks):
            out[f"extractor.block{i}.weight"] = b.weight
            out[f"extractor.block{i}.bias"] = b.bias
        out["head.projection.weight"] = self.head.projection.weight
        out["head.projection.bias"] = self.head.projection.bias
        out["align.W"] = self.align.W
        return out

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        tensors = self.named_tensors()
        if name not in tensors:
            raise ValidationError(f"unknown parameter tensor '{name}'")
        if tensors[name].shape != value.shape:
            raise ValidationError(f"shape mismatch for tensor '{name}'")
        tensors[name][...] = value


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_default_extractor(
    input_dim: int,
    n_blocks: int = 4,
    taps: tuple[int, ...] | None = None,
    seed: int = 0,
) -> ExtractorParams:
    """Surrogate extractor: block 0 identity-activated and identity-
    initialized, later blocks gelu with 1/sqrt(fan_in) Gaussian weights.
    All blocks keep the input width; taps default to every block."""
    from .dataset import rng_from_seed

    rng = rng_from_seed(seed)
    blocks = []
    for i in range(n_blocks):
        if i == 0:
            weight = np.eye(input_dim)
            activation = "identity"
        else:
            weight = rng.standard_normal((input_dim, input_dim)) / math.sqrt(input_dim)
            activation = "gelu"
        blocks.append(Block(weight=weight, bias=np.zeros(input_dim), activation=activation))
    if taps is None:
        taps = tuple(range(n_blocks))
    return ExtractorParams(blocks=blocks, input_dim=input_dim, taps=taps)


def init_voxel_head_pca(train_targets: np.ndarray, k: int) -> PcaModel:
    """Fit the fixed PCA output stage on training-split voxel targets.

    The returned model's components become the output-stage weight and its
    mean the output-stage bias; neither ever receives a gradient."""
    return pca_fit(train_targets, k)


def init_alignment_matrix(d_text: int, d_feat: int, seed: int = 0) -> AlignmentMatrix:
    """Identity when dimensions agree, else Gaussian scaled by 1/sqrt(d_feat)."""
    from .dataset import rng_from_seed

    if d_text == d_feat:
        return AlignmentMatrix(W=np.eye(d_text))
    rng = rng_from_seed(seed)
    return AlignmentMatrix(W=rng.standard_normal((d_text, d_feat)) / math.sqrt(d_feat))


def build_model(
    d_img: int,
    d_text: int,
    train_targets: np.ndarray,
    cfg: TrainConfig,
    n_blocks: int = 4,
) -> ModelParams:
    """Assemble the full model for a dataset: default extractor, PCA-backed
    voxel head, alignment matrix. All initialization derives from cfg.seed."""
    from .dataset import rng_from_seed

    extractor = build_default_extractor(d_img, n_blocks=n_blocks, seed=cfg.seed)
    d_feat = extractor.feature_dim
    k = cfg.pca_k
    pca = init_voxel_head_pca(train_targets, k)
    rng = rng_from_seed(cfg.seed + 1)
    proj = Block(
        weight=rng.standard_normal((k, d_feat)) / math.sqrt(d_feat),
        bias=np.zeros(k),
        activation="identity",
    )
    head = VoxelHead(projection=proj, dropout_rate=cfg.dropout_rate, output_stage=pca)
    align = init_alignment_matrix(d_text, d_feat, seed=cfg.seed + 2)
    return ModelParams(extractor=extractor, head=head, align=align)


# ---------------------------------------------------------------------------
# Forward / backward primitives
# ---------------------------------------------------------------------------

def forward_extract(
    p: ExtractorParams,
    x: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    cache: dict | None = None,
) -> np.ndarray:
    """Run the block stack and concatenate tap outputs.

    mode exists for interface symmetry with the head; the extractor itself
    is deterministic in both modes. Pass a dict as cache to retain the
    intermediates needed by extract_backward."""
    if x.ndim != 2 or x.shape[1] != p.input_dim:
        raise ValidationError(
            f"forward_extract: input shape {x.shape} incompatible with input_dim {p.input_dim}"
        )
    h = x
    pre = []
    outs = []
    for b in p.blocks:
        z = h @ b.weight.T + b.bias
        h = gelu(z) if b.activation == "gelu" else z
        pre.append(z)
        outs.append(h)
    feature = np.concatenate([outs[t] for t in p.taps], axis=1)
    if cache is not None:
        cache["x"] = x
        cache["pre"] = pre
        cache["outs"] = outs
    return feature


def extract_backward(p: ExtractorParams, cache: dict, dfeature: np.ndarray) -> dict[str, np.ndarray]:
    """Backprop the tap-concatenated feature gradient through the stack."""
    outs = cache["outs"]
    pre = cache["pre"]
    x = cache["x"]
    # Route feature slices back to their tap blocks.
    dh = [np.zeros_like(o) for o in outs]
    col = 0
    for t in p.taps:
        width = outs[t].shape[1]
        dh[t] += dfeature[:, col:col + width]
        col += width
    grads: dict[str, np.ndarray] = {}
    carry = np.zeros_like(outs[-1])
    for i in range(len(p.blocks) - 1, -1, -1):
        b = p.blocks[i]
        total = dh[i] + carry
        dz = total * gelu_grad(pre[i]) if b.activation == "gelu" else total
        inp = x if i == 0 else outs[i - 1]
        grads[f"extractor.block{i}.weight"] = dz.T @ inp
        grads[f"extractor.block{i}.bias"] = dz.sum(axis=0)
        carry = dz @ b.weight
    return grads


def _dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    # Inverted scaling: kept units are divided by (1 - rate) at train time
    # so eval applies no rescaling. One rng.random(shape) draw per call.
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def predict_voxels(
    h: VoxelHead,
    f: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    cache: dict | None = None,
) -> np.ndarray:
    """Features -> dropout -> projection -> fixed PCA reconstruction."""
    if f.ndim != 2 or f.shape[1] != h.projection.weight.shape[1]:
        raise ValidationError(
            f"predict_voxels: feature shape {f.shape} incompatible with projection"
        )
    if mode == "train" and h.dropout_rate > 0.0:
        if rng is None:
            raise PreconditionError("predict_voxels: train mode with dropout needs an rng")
        scale = _dropout_mask(f.shape, h.dropout_rate, rng)
    else:
        scale = None
    dropped = f if scale is None else f * scale
    coeffs = dropped @ h.projection.weight.T + h.projection.bias
    voxels = coeffs @ h.output_stage.components + h.output_stage.mean
    if cache is not None:
        cache["dropout_scale"] = scale
        cache["dropped"] = dropped
    return voxels


def head_backward(h: VoxelHead, cache: dict, dvoxels: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradient wrt projection parameters and the incoming feature. The PCA
    stage is constant, so its only role is the fixed linear map."""
    dcoeffs = dvoxels @ h.output_stage.components.T
    grads = {
        "head.projection.weight": dcoeffs.T @ cache["dropped"],
        "head.projection.bias": dcoeffs.sum(axis=0),
    }
    ddropped = dcoeffs @ h.projection.weight
    scale = cache["dropout_scale"]
    dfeature = ddropped if scale is None else ddropped * scale
    return grads, dfeature


def _normalize_rows(M: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(M, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError(f"align_scores: zero-norm row in {name}")
    return M / norms[:, None], norms


def align_scores(
    W: AlignmentMatrix,
    T: np.ndarray,
    F: np.ndarray,
    cache: dict | None = None,
) -> np.ndarray:
    """Cosine score matrix s_ij between text row i and aligned feature row j.

    Both the text embeddings and the mapped features W f_j are L2-normalized
    per row before the dot product, so entries live in [-1, 1] and per-row
    positive rescaling of either input leaves the scores unchanged."""
    if T.ndim != 2 or F.ndim != 2 or T.shape[0] != F.shape[0]:
        raise ValidationError("align_scores: T and F must be 2-D with equal row counts")
    if W.W.shape != (T.shape[1], F.shape[1]):
        raise ValidationError(
            f"align_scores: W shape {W.W.shape} incompatible with d_text={T.shape[1]}, d_feat={F.shape[1]}"
        )
    G = F @ W.W.T
    T_hat, _ = _normalize_rows(T, "text embeddings")
    G_hat, g_norms = _normalize_rows(G, "aligned features")
    scores = T_hat @ G_hat.T
    if cache is not None:
        cache.update({"F": F, "T_hat": T_hat, "G_hat": G_hat, "g_norms": g_norms})
    return scores


def align_backward(W: AlignmentMatrix, cache: dict, dscores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the scores wrt W and the features (text side is data)."""
    T_hat, G_hat, g_norms, F = cache["T_hat"], cache["G_hat"], cache["g_norms"], cache["F"]
    dG_hat = dscores.T @ T_hat
    # Through row normalization: d g = (d ghat - ghat (ghat . d ghat)) / |g|
    inner = np.sum(dG_hat * G_hat, axis=1, keepdims=True)
    dG = (dG_hat - G_hat * inner) / g_norms[:, None]
    dW = dG.T @ F
    dF = dG @ W.W
    return dW, dF


# ---------------------------------------------------------------------------
# Freeze masks
# ---------------------------------------------------------------------------

FreezeMask = dict


def stage1_freeze_mask(model: ModelParams) -> dict[str, bool]:
    """Stage 1: only the voxel-head projection trains."""
    mask = {name: True for name in model.named_tensors()}
    mask["head.projection.weight"] = False
    mask["head.projection.bias"] = False
    return mask


def stage2_freeze_mask(model: ModelParams, unfreeze_last_n_blocks: int) -> dict[str, bool]:
    """Stage 2: last N extractor blocks and the alignment matrix train;
    the voxel head and the remaining blocks stay frozen."""
    mask = {name: True for name in model.named_tensors()}
    n_blocks = len(model.extractor.blocks)
    for i in range(max(0, n_blocks - unfreeze_last_n_blocks), n_blocks):
        mask[f"extractor.block{i}.weight"] = False
        mask[f"extractor.block{i}.bias"] = False
    mask["align.W"] = False
    return mask


def apply_freeze(mask: dict[str, bool], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Zero the gradients of frozen tensors; every gradient tensor must be
    covered by the mask."""
    uncovered = [name for name in grads if name not in mask]
    if uncovered:
        raise ValidationError(f"apply_freeze: tensors not covered by mask: {uncovered}")
    out = {}
    for name, g in grads.items():
        out[name] = np.zeros_like(g) if mask[name] else g
    return out


def trainable_names(mask: dict[str, bool]) -> list[str]:
    return sorted(name for name, frozen in mask.items() if not frozen)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    stage: int
    epoch: int
    model: ModelParams
    config: TrainConfig
    best_val_m: float
    rng_state: dict

    def predict(self, features: np.ndarray) -> np.ndarray:
        f = forward_extract(self.model.extractor, features, mode="eval")
        return predict_voxels(self.model.head, f, mode="eval")


def _rng_state_to_json(state: dict) -> dict:
    def conv(v):
        if isinstance(v, np.ndarray):
            return [int(x) for x in v.tolist()]
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (np.integer,)):
            return int(v)
        return v

    return conv(state)


def _rng_state_from_json(state: dict) -> dict:
    out = dict(state)
    inner = dict(out["state"])
    inner["counter"] = np.array(inner["counter"], dtype=np.uint64)
    inner["key"] = np.array(inner["key"], dtype=np.uint64)
    out["state"] = inner
    if "buffer" in out:
        out["buffer"] = np.array(out["buffer"], dtype=np.uint64)
    return out


def _checkpoint_tensors(model: ModelParams) -> dict[str, np.ndarray]:
    tensors = dict(model.named_tensors())
    tensors["head.pca.mean"] = model.head.output_stage.mean
    tensors["head.pca.components"] = model.head.output_stage.components
    tensors["head.pca.variances"] = model.head.output_stage.variances
    return tensors


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Single-file checkpoint: 8-byte magic, 8-byte little-endian header
    length, JSON header, then one float64 blob per tensor in sorted name
    order. Written atomically (temp file + rename) and byte-reproducible:
    saving a loaded checkpoint yields identical bytes."""
    tensors = _checkpoint_tensors(ckpt.model)
    names = sorted(tensors)
    offset = 0
    tensor_index = []
    for name in names:
        arr = tensors[name]
        nbytes = arr.size * 8
        tensor_index.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes}
        )
        offset += nbytes
    header = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "stage": ckpt.stage,
        "epoch": ckpt.epoch,
        "best_val_m": ckpt.best_val_m,
        "config": ckpt.config.to_dict(),
        "rng_state": _rng_state_to_json(ckpt.rng_state),
        "extractor": {
            "input_dim": ckpt.model.extractor.input_dim,
            "taps": list(ckpt.model.extractor.taps),
            "activations": [b.activation for b in ckpt.model.extractor.blocks],
        },
        "head": {"dropout_rate": ckpt.model.head.dropout_rate},
        "tensors": tensor_index,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = str(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for name in names:
            fh.write(np.ascontiguousarray(tensors[name], dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = open(path, "rb").read()
    except OSError as e:
        raise CorruptCheckpointError(f"cannot read checkpoint: {e}") from e
    if len(blob) < 16 or blob[:8] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError("not a checkpoint file (bad magic)")
    header_len = int.from_bytes(blob[8:16], "little")
    if len(blob) < 16 + header_len:
        raise CorruptCheckpointError("truncated checkpoint header")
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"unreadable checkpoint header: {e}") from e
    if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointVersionError(
            f"checkpoint schema {header.get('schema_version')} != {CHECKPOINT_SCHEMA_VERSION}"
        )
    body = blob[16 + header_len:]
    expected = sum(t["nbytes"] for t in header["tensors"])
    if len(body) != expected:
        raise CorruptCheckpointError(
            f"checkpoint body has {len(body)} bytes, expected {expected}"
        )
    tensors = {}
    for t in header["tensors"]:
        raw = body[t["offset"]: t["offset"] + t["nbytes"]]
        tensors[t["name"]] = np.frombuffer(raw, dtype="<f8").reshape(t["shape"]).copy()

    activations = header["extractor"]["activations"]
    blocks = []
    for i, act in enumerate(activations):
        blocks.append(
            Block(
                weight=tensors[f"extractor.block{i}.weight"],
                bias=tensors[f"extractor.block{i}.bias"],
                activation=act,
            )
        )
    extractor = ExtractorParams(
        blocks=blocks,
        input_dim=header["extractor"]["input_dim"],
        taps=tuple(header["extractor"]["taps"]),
    )
    pca = PcaModel(
        mean=tensors["head.pca.mean"],
        components=tensors["head.pca.components"],
        variances=tensors["head.pca.variances"],
    )
    head = VoxelHead(
        projection=Block(
            weight=tensors["head.projection.weight"],
            bias=tensors["head.projection.bias"],
            activation="identity",
        ),
        dropout_rate=header["head"]["dropout_rate"],
        output_stage=pca,
    )
    align = AlignmentMatrix(W=tensors["align.W"])
    model = ModelParams(extractor=extractor, head=head, align=align)
    return Checkpoint(
        stage=header["stage"],
        epoch=header["epoch"],
        model=model,
        config=TrainConfig.from_dict(header["config"]),
        best_val_m=header["best_val_m"],
        rng_state=_rng_state_from_json(header["rng_state"]),
    )


def copy_model(model: ModelParams) -> ModelParams:
    blocks = [
        Block(weight=b.weight.copy(), bias=b.bias.copy(), activation=b.activation)
        for b in model.extractor.blocks
    ]
    extractor = ExtractorParams(
        blocks=blocks, input_dim=model.extractor.input_dim, taps=model.extractor.taps
    )
    head = VoxelHead(
        projection=Block(
            weight=model.head.projection.weight.copy(),
            bias=model.head.projection.bias.copy(),
            activation="identity",
        ),
        dropout_rate=model.head.dropout_rate,
        output_stage=PcaModel(
            mean=model.head.output_stage.mean.copy(),
            components=model.head.output_stage.components.copy(),
            variances=model.head.output_stage.variances.copy(),
        ),
    )
    align = AlignmentMatrix(W=model.align.W.copy())
    return ModelParams(extractor=extractor, head=head, align=align)
