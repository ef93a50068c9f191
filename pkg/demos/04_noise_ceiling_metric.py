"""Behavior of the noise-ceiling-normalized metric.

m is the mean over vertices of squared Pearson correlation divided by the
vertex's noise ceiling. An ideal predictor scores 1 regardless of how
noisy the measurements are; zero-padded vertices (NC = 0) are excluded
rather than poisoning the denominator.
"""

import numpy as np

from voxalign.dataset import SyntheticSpec, generate_synthetic, pad_vertices
from voxalign.evaluation import (
    evaluate_predictions,
    noise_normalized_score,
    r2_per_vertex,
)

ds, gt = generate_synthetic(
    SyntheticSpec(n_samples=5000, latent_dim=6, d_img=24, d_text=12,
                  n_vertices=40, noise_std_img=0.0, noise_std_voxel=0.8, seed=2)
)

# The true signal (C z) is the best possible prediction.
signal = gt.latents @ gt.voxel_loadings.T
r2 = r2_per_vertex(signal, ds.voxel_targets)
print("ideal predictor, noisy targets:")
print(f"  raw R^2 per vertex spans [{r2.min():.3f}, {r2.max():.3f}]"
      f" (capped by measurement noise)")
m, _, _ = noise_normalized_score(r2, ds.noise_ceiling)
print(f"  noise-normalized m = {m:.4f}  (1 would be perfect)\n")

# Degrade the prediction and watch m fall.
rng = np.random.Generator(np.random.Philox(key=3))
for extra in (0.5, 1.0, 2.0):
    noisy_pred = signal + extra * rng.standard_normal(signal.shape)
    m_noisy, _, _ = noise_normalized_score(
        r2_per_vertex(noisy_pred, ds.voxel_targets), ds.noise_ceiling)
    print(f"  prediction noise std {extra:3.1f}: m = {m_noisy:.4f}")

# Zero-padded vertices are excluded, not averaged in as zeros.
padded = pad_vertices(ds, 50, np.arange(40))
pred_padded = np.zeros((5000, 50))
pred_padded[:, :40] = signal
report = evaluate_predictions(
    pred_padded, padded.voxel_targets, padded.noise_ceiling,
    padded.roi_labels, padded.manifest.roi_names,
)
print(f"\nafter padding 40 -> 50 vertices: {report.n_excluded_vertices} excluded, "
      f"m = {report.overall_m:.4f} (unchanged)")
print("per-ROI medians:")
for name, value in sorted(report.per_roi_median.items()):
    print(f"  {name}: {value:.4f}")
