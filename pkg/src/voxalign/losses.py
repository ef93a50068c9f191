"""Loss functions with analytic gradients, and a central-difference checker.

Three quantities: the MSE between predicted and measured voxels, the
InfoNCE alignment loss over a batch score matrix, and their weighted sum.
The InfoNCE denominator sums over in-batch candidates (text row i against
every aligned feature column j), which is the standard reading of
in-batch negatives; the loss is single-direction by default (text anchors,
image candidates) with a symmetric variant behind a flag.

MSE averages over both samples and vertices so the weight coefficient's
scale does not depend on vertex-space resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, ValidationError


@dataclass
class LossValue:
    value: float
    gradients: dict[str, np.ndarray]


@dataclass(frozen=True)
class AlignConfig:
    tau: float
    lambda_: float = 0.0
    symmetric: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise PreconditionError("AlignConfig: tau must be > 0")
        if self.lambda_ < 0:
            raise PreconditionError("AlignConfig: lambda must be >= 0")


def mse_loss(pred: np.ndarray, target: np.ndarray) -> LossValue:
    """Mean over all B x V elements of the squared error; gradient wrt the
    predictions is 2 (pred - target) / (B * V)."""
    if pred.shape != target.shape:
        raise ValidationError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    value = float(np.sum(diff * diff) / n)
    return LossValue(value=value, gradients={"pred": 2.0 * diff / n})


def _row_softmax(scaled: np.ndarray) -> np.ndarray:
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def alignment_loss(scores: np.ndarray, cfg: AlignConfig) -> LossValue:
    """InfoNCE over a B x B score matrix: the positive pair sits on the
    diagonal, candidates are the batch.

    Per sample: -log softmax(scores_i / tau)[i], computed with row-max
    subtraction; value is the batch mean. Gradient wrt scores is
    (softmax - I) / (B * tau). At B=1 the softmax is a single term and the
    loss is exactly 0.
    """
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ValidationError(f"alignment_loss: scores must be square, got {scores.shape}")
    if scores.shape[0] < 1:
        raise PreconditionError("alignment_loss: need at least one sample")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("alignment_loss: scores contain non-finite values")
    B = scores.shape[0]
    tau = cfg.tau

    def one_direction(s):
        scaled = s / tau
        shifted = scaled - scaled.max(axis=1, keepdims=True)
        log_z = np.log(np.sum(np.exp(shifted), axis=1))
        log_p_pos = np.diag(shifted) - log_z
        p = _row_softmax(scaled)
        grad = (p - np.eye(B)) / (B * tau)
        return float(-np.mean(log_p_pos)) + 0.0, grad

    value, grad = one_direction(scores)
    if cfg.symmetric:
        value_t, grad_t = one_direction(scores.T)
        value = 0.5 * (value + value_t)
        grad = 0.5 * (grad + grad_t.T)
    return LossValue(value=value, gradients={"scores": grad})


def total_loss(mse: LossValue, align: LossValue, cfg: AlignConfig) -> LossValue:
    """L = L_mse + lambda * L_align, gradients combined with the same weight.
    At lambda = 0 the result is the MSE term exactly, gradients included."""
    if cfg.lambda_ == 0.0:
        return LossValue(value=mse.value, gradients=dict(mse.gradients))
    grads: dict[str, np.ndarray] = {}
    for name, g in mse.gradients.items():
        grads[name] = g.copy()
    for name, g in align.gradients.items():
        if name in grads:
            grads[name] = grads[name] + cfg.lambda_ * g
        else:
            grads[name] = cfg.lambda_ * g
    return LossValue(value=mse.value + cfg.lambda_ * align.value, gradients=grads)


def grad_check_report(
    loss_fn,
    params: dict[str, np.ndarray],
    epsilon: float = 1e-5,
    max_coords_per_tensor: int = 200,
    seed: int = 0,
) -> dict[str, float]:
    """Compare analytic gradients against central differences.

    loss_fn(params) must return a LossValue whose gradients cover exactly
    the given tensors (frozen tensors are simply not passed in, so they
    never appear in the report). For each tensor either every coordinate
    or a seeded subsample of max_coords_per_tensor coordinates is probed
    with (L(t+e) - L(t-e)) / 2e; the relative error denominator is
    max(|analytic|, |numeric|, 1e-8). Returns max relative error per
    tensor name.
    """
    if not (1e-8 <= epsilon <= 1e-4):
        raise PreconditionError("grad_check: epsilon must lie in [1e-8, 1e-4]")
    base = loss_fn(params)
    if not np.isfinite(base.value):
        raise ValidationError("grad_check: loss is non-finite at the evaluation point")
    missing = [n for n in params if n not in base.gradients]
    if missing:
        raise ValidationError(f"grad_check: loss_fn returned no gradient for {missing}")

    rng = np.random.Generator(np.random.Philox(key=seed))
    report: dict[str, float] = {}
    for name in sorted(params):
        theta = params[name]
        analytic = base.gradients[name]
        if analytic.shape != theta.shape:
            raise ValidationError(f"grad_check: gradient shape mismatch for '{name}'")
        size = theta.size
        if size <= max_coords_per_tensor:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=max_coords_per_tensor, replace=False)
        worst = 0.0
        flat = theta.reshape(-1)
        for c in coords:
            original = flat[c]
            flat[c] = original + epsilon
            up = loss_fn(params).value
            flat[c] = original - epsilon
            down = loss_fn(params).value
            flat[c] = original
            numeric = (up - down) / (2.0 * epsilon)
            a = float(analytic.reshape(-1)[c])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        report[name] = worst
    return report


def grad_check(loss_fn, params: dict[str, np.ndarray], epsilon: float = 1e-5, **kwargs) -> float:
    """Max relative error across all checked tensors (see grad_check_report)."""
    report = grad_check_report(loss_fn, params, epsilon=epsilon, **kwargs)
    return max(report.values()) if report else 0.0
