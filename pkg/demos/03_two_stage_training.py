"""The two-stage training procedure end to end.

Stage 1 fits only the voxel-head projection under MSE (extractor frozen,
PCA output stage fixed from train-split targets). Stage 2 resumes from the
best stage-1 checkpoint, unfreezes the last two extractor blocks plus the
alignment matrix, and adds the InfoNCE image-text term at a small weight.
"""

from voxalign.config import desk_stage1, desk_stage2
from voxalign.dataset import (
    SplitSpec,
    SyntheticSpec,
    generate_synthetic,
    ridge_oracle_predictions,
    split_dataset,
)
from voxalign.evaluation import noise_normalized_score, r2_per_vertex
from voxalign.trainer import train_stage1, train_stage2, validation_m

spec = SyntheticSpec(n_samples=2000, latent_dim=8, d_img=32, d_text=16,
                     n_vertices=50, noise_std_img=0.5, noise_std_text=0.1,
                     noise_std_voxel=0.5, seed=0)
ds, gt = generate_synthetic(spec)
split = split_dataset(ds, SplitSpec(seed=0))
train_idx, val_idx, test_idx = split
print(f"split sizes: train {len(train_idx)}, val {len(val_idx)}, test {len(test_idx)}\n")

pred = ridge_oracle_predictions(gt, ds.image_features[val_idx])
oracle = noise_normalized_score(
    r2_per_vertex(pred, ds.voxel_targets[val_idx]), ds.noise_ceiling)[0]
print(f"ridge-oracle ceiling on the validation split: m = {oracle:.4f}\n")

print("stage 1: MSE only, extractor frozen")
ckpt1, rec1 = train_stage1(desk_stage1(epochs=40, pca_k=16, seed=0), ds, split)
for e in rec1.epochs[::8]:
    print(f"  epoch {e.epoch:>2}: train loss {e.train_loss:.4f}, val m {e.val_m:.4f}")
print(f"  best: m = {ckpt1.best_val_m:.4f} at epoch {ckpt1.epoch}\n")

print("stage 2: unfreeze last 2 blocks + alignment matrix, lambda = 1e-3")
ckpt2, rec2 = train_stage2(desk_stage2(pca_k=16, seed=0), ckpt1, ds, split)
for e in rec2.epochs[::2]:
    print(f"  epoch {e.epoch:>2}: train loss {e.train_loss:.4f}, val m {e.val_m:.5f}")
print(f"  best: m = {ckpt2.best_val_m:.5f} at epoch {ckpt2.epoch}\n")

m_test = validation_m(ckpt2.model, ds, test_idx)
print(f"stage-1 val m {ckpt1.best_val_m:.5f} -> stage-2 val m {ckpt2.best_val_m:.5f}")
print(f"stage-2 test m {m_test:.5f} (oracle ceiling {oracle:.4f})")
