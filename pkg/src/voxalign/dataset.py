"""Dataset interchange format, train/val/test split, vertex padding, and the
synthetic latent-linear benchmark generator.

Interchange directory layout (all binary files little-endian, row-major):

    manifest.json        n_samples, d_img, d_text, n_vertices, value_width,
                         roi_names, subject_id
    features.bin         n_samples x d_img        float<value_width>
    text_embeddings.bin  n_samples x d_text       float<value_width>
    voxels.bin           n_samples x n_vertices   float<value_width>
    noise_ceiling.bin    n_vertices               float<value_width>
    roi_labels.bin       n_vertices               uint32 indices into roi_names

File sizes must match the manifest arithmetic exactly. 32-bit values are
widened to float64 on load; all in-memory arithmetic is float64.

Randomness: every seeded operation in this package draws from
numpy.random.Generator(numpy.random.Philox(key=seed)) - a counter-based
64-bit generator with a published algorithm, so splits and synthetic
datasets are reproducible across machines and implementations.

Load/write are single-threaded per path; a Dataset is validated on
construction and treated as immutable afterwards, safe to share across
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import PreconditionError, ValidationError

UNKNOWN_ROI = "unknown"

_MANIFEST_FIELDS = ("n_samples", "d_img", "d_text", "n_vertices", "value_width", "roi_names", "subject_id")


def rng_from_seed(seed: int) -> np.random.Generator:
    """The package-wide seeded generator (Philox, counter-based)."""
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass(frozen=True)
class DatasetManifest:
    n_samples: int
    d_img: int
    d_text: int
    n_vertices: int
    value_width: int
    roi_names: tuple[str, ...]
    subject_id: str

    def __post_init__(self):
        object.__setattr__(self, "roi_names", tuple(self.roi_names))
        for name in ("n_samples", "d_img", "d_text", "n_vertices"):
            if getattr(self, name) < 1:
                raise ValidationError(f"manifest.json: {name} must be >= 1")
        if self.value_width not in (32, 64):
            raise ValidationError("manifest.json: value_width must be 32 or 64")
        if len(set(self.roi_names)) != len(self.roi_names):
            raise ValidationError("manifest.json: roi_names must be unique")
        if len(self.roi_names) == 0:
            raise ValidationError("manifest.json: roi_names must be nonempty")


@dataclass(eq=False)
class Dataset:
    """Aligned (image feature, text embedding, voxel target) triples plus
    per-vertex noise ceilings and ROI labels."""

    manifest: DatasetManifest
    image_features: np.ndarray    # n x d_img
    text_embeddings: np.ndarray   # n x d_text
    voxel_targets: np.ndarray     # n x n_vertices
    noise_ceiling: np.ndarray     # n_vertices, in [0, 1]
    roi_labels: np.ndarray        # n_vertices, indices into roi_names

    def __post_init__(self):
        self.validate()

    def validate(self):
        m = self.manifest
        checks = [
            ("features.bin", self.image_features, (m.n_samples, m.d_img)),
            ("text_embeddings.bin", self.text_embeddings, (m.n_samples, m.d_text)),
            ("voxels.bin", self.voxel_targets, (m.n_samples, m.n_vertices)),
        ]
        for fname, arr, shape in checks:
            if arr.shape != shape:
                raise ValidationError(f"{fname}: shape {arr.shape} does not match manifest {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{fname}: contains non-finite values")
        if self.noise_ceiling.shape != (m.n_vertices,):
            raise ValidationError("noise_ceiling.bin: length does not match manifest n_vertices")
        if not np.all(np.isfinite(self.noise_ceiling)):
            raise ValidationError("noise_ceiling.bin: contains non-finite values")
        if np.any(self.noise_ceiling < 0.0) or np.any(self.noise_ceiling > 1.0):
            raise ValidationError("noise_ceiling.bin: values outside [0, 1]")
        if self.roi_labels.shape != (m.n_vertices,):
            raise ValidationError("roi_labels.bin: length does not match manifest n_vertices")
        if np.any(self.roi_labels < 0) or np.any(self.roi_labels >= len(m.roi_names)):
            raise ValidationError("roi_labels.bin: label index out of range for roi_names")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.manifest == other.manifest
            and np.array_equal(self.image_features, other.image_features)
            and np.array_equal(self.text_embeddings, other.text_embeddings)
            and np.array_equal(self.voxel_targets, other.voxel_targets)
            and np.array_equal(self.noise_ceiling, other.noise_ceiling)
            and np.array_equal(self.roi_labels, other.roi_labels)
        )


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.85, 0.10, 0.05)
    seed: int = 0

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fr)
        if any(f <= 0 for f in fr):
            raise ValidationError("SplitSpec: fractions must all be positive")
        if abs(sum(fr) - 1.0) > 1e-12:
            raise ValidationError("SplitSpec: fractions must sum to 1")


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 2000
    latent_dim: int = 8
    d_img: int = 32
    d_text: int = 16
    n_vertices: int = 50
    noise_std_img: float = 0.5
    noise_std_text: float = 0.1
    noise_std_voxel: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("n_samples", "latent_dim", "d_img", "d_text", "n_vertices"):
            if getattr(self, name) < 1:
                raise PreconditionError(f"SyntheticSpec: {name} must be >= 1")
        for name in ("noise_std_img", "noise_std_text", "noise_std_voxel"):
            if getattr(self, name) < 0:
                raise PreconditionError(f"SyntheticSpec: {name} must be >= 0")


@dataclass(eq=False)
class SyntheticGroundTruth:
    """Generative model behind a synthetic dataset; the verification oracle.

    img_loadings   : d_img x r
    text_loadings  : d_text x r
    voxel_loadings : n_vertices x r
    latents        : n x r standard-normal draws
    noise_ceiling  : analytic NC_j = |C_j|^2 / (|C_j|^2 + noise_std_voxel^2)
    """

    spec: SyntheticSpec
    img_loadings: np.ndarray
    text_loadings: np.ndarray
    voxel_loadings: np.ndarray
    latents: np.ndarray
    noise_ceiling: np.ndarray


def split_dataset(ds_or_n, spec: SplitSpec):
    """Split sample indices into (train, val, test) lists.

    Sizes follow the floor rule: n_test = floor(f_test*n),
    n_val = floor(f_val*n), n_train = n - n_val - n_test. The permutation
    is drawn from the seeded Philox generator, so a fixed seed gives the
    same split everywhere.
    """
    n = ds_or_n.manifest.n_samples if isinstance(ds_or_n, Dataset) else int(ds_or_n)
    if n < 3:
        raise PreconditionError(f"split_dataset: need at least 3 samples, got {n}")
    f_train, f_val, f_test = spec.fractions
    # Nudge before flooring: decimal fractions times integers land within
    # 1e-9 of the mathematical product but not always on the right side.
    n_test = int(math.floor(f_test * n + 1e-9))
    n_val = int(math.floor(f_val * n + 1e-9))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise PreconditionError(
            f"split_dataset: fractions {spec.fractions} give an empty split at n={n}"
        )
    perm = rng_from_seed(spec.seed).permutation(n)
    train = perm[:n_train]
    val = perm[n_train:n_train + n_val]
    test = perm[n_train + n_val:]
    return train, val, test


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, SyntheticGroundTruth]:
    """Draw a dataset from the latent linear model.

    z_i ~ N(0, I_r); loading matrices A (d_img x r), B (d_text x r),
    C (n_vertices x r) have N(0, 1/r) entries; observations are the linear
    images of z plus isotropic Gaussian noise at the configured stds. The
    text embeddings share the latent with the image features, so alignment
    between the two carries real information about the voxel targets.

    The analytic noise ceiling is Var(C_j . z) / (Var(C_j . z) + std^2)
    with Var(C_j . z) = |C_j|^2; at zero voxel noise every NC_j is 1.

    Bit-deterministic for a fixed seed (fixed draw order, noise always
    drawn even at std 0).
    """
    rng = rng_from_seed(spec.seed)
    r = spec.latent_dim
    scale = 1.0 / math.sqrt(r)
    A = rng.standard_normal((spec.d_img, r)) * scale
    B = rng.standard_normal((spec.d_text, r)) * scale
    C = rng.standard_normal((spec.n_vertices, r)) * scale
    z = rng.standard_normal((spec.n_samples, r))
    eps_img = rng.standard_normal((spec.n_samples, spec.d_img))
    eps_text = rng.standard_normal((spec.n_samples, spec.d_text))
    eps_vox = rng.standard_normal((spec.n_samples, spec.n_vertices))

    features = z @ A.T + spec.noise_std_img * eps_img
    text = z @ B.T + spec.noise_std_text * eps_text
    voxels = z @ C.T + spec.noise_std_voxel * eps_vox

    signal_var = np.sum(C * C, axis=1)
    if spec.noise_std_voxel == 0.0:
        nc = np.ones(spec.n_vertices)
    else:
        nc = signal_var / (signal_var + spec.noise_std_voxel ** 2)

    roi_names = ("roi_a", "roi_b", "roi_c", "roi_d")
    roi_labels = np.arange(spec.n_vertices, dtype=np.uint32) % len(roi_names)

    manifest = DatasetManifest(
        n_samples=spec.n_samples,
        d_img=spec.d_img,
        d_text=spec.d_text,
        n_vertices=spec.n_vertices,
        value_width=64,
        roi_names=roi_names,
        subject_id="synthetic",
    )
    ds = Dataset(
        manifest=manifest,
        image_features=features,
        text_embeddings=text,
        voxel_targets=voxels,
        noise_ceiling=nc,
        roi_labels=roi_labels,
    )
    gt = SyntheticGroundTruth(
        spec=spec,
        img_loadings=A,
        text_loadings=B,
        voxel_loadings=C,
        latents=z,
        noise_ceiling=nc.copy(),
    )
    return ds, gt


def ridge_oracle_weights(gt: SyntheticGroundTruth) -> np.ndarray:
    """Population-optimal linear map from observed image features to voxel
    targets: M = C A^T (A A^T + noise_std_img^2 I)^-1, shape n_vertices x d_img.

    This is the achievable-score oracle: its predictions upper-bound what
    any feature-based linear readout can reach on this generative model.
    """
    A = gt.img_loadings
    C = gt.voxel_loadings
    sigma2 = gt.spec.noise_std_img ** 2
    gram = A @ A.T + sigma2 * np.eye(A.shape[0])
    # Noiseless features leave the Gram matrix rank-deficient (rank r < d).
    if sigma2 == 0.0:
        return C @ A.T @ np.linalg.pinv(gram)
    return C @ A.T @ np.linalg.inv(gram)


def ridge_oracle_predictions(gt: SyntheticGroundTruth, features: np.ndarray) -> np.ndarray:
    return features @ ridge_oracle_weights(gt).T


def pad_vertices(ds: Dataset, target_vertex_count: int, vertex_index_map) -> Dataset:
    """Scatter vertex columns into a wider vertex space.

    vertex_index_map[j] gives the destination column of source vertex j;
    the map must be injective into range(target_vertex_count). Absent
    destination vertices get all-zero targets, noise ceiling 0, and the
    "unknown" ROI label (appended to roi_names when missing).
    """
    idx = np.asarray(vertex_index_map, dtype=np.int64)
    n_src = ds.manifest.n_vertices
    if target_vertex_count < n_src:
        raise PreconditionError("pad_vertices: target width smaller than current vertex count")
    if idx.shape != (n_src,):
        raise ValidationError("pad_vertices: map length must equal current vertex count")
    if np.any(idx < 0) or np.any(idx >= target_vertex_count):
        raise ValidationError("pad_vertices: map entries outside target range")
    if len(np.unique(idx)) != n_src:
        raise ValidationError("pad_vertices: map is not injective")

    roi_names = list(ds.manifest.roi_names)
    if UNKNOWN_ROI in roi_names:
        unknown_idx = roi_names.index(UNKNOWN_ROI)
    else:
        roi_names.append(UNKNOWN_ROI)
        unknown_idx = len(roi_names) - 1

    voxels = np.zeros((ds.manifest.n_samples, target_vertex_count))
    voxels[:, idx] = ds.voxel_targets
    nc = np.zeros(target_vertex_count)
    nc[idx] = ds.noise_ceiling
    labels = np.full(target_vertex_count, unknown_idx, dtype=np.uint32)
    labels[idx] = ds.roi_labels

    manifest = replace(ds.manifest, n_vertices=target_vertex_count, roi_names=tuple(roi_names))
    return Dataset(
        manifest=manifest,
        image_features=ds.image_features.copy(),
        text_embeddings=ds.text_embeddings.copy(),
        voxel_targets=voxels,
        noise_ceiling=nc,
        roi_labels=labels,
    )


# ---------------------------------------------------------------------------
# Interchange I/O
# ---------------------------------------------------------------------------

def _float_dtype(width: int) -> np.dtype:
    return np.dtype("<f4") if width == 32 else np.dtype("<f8")


def _read_array(path: Path, dtype: np.dtype, count: int, shape) -> np.ndarray:
    if not path.is_file():
        raise ValidationError(f"{path.name}: missing")
    expected = count * dtype.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise ValidationError(f"{path.name}: expected {expected} bytes, found {actual}")
    arr = np.fromfile(path, dtype=dtype)
    return arr.reshape(shape)


def load_manifest(path) -> DatasetManifest:
    mpath = Path(path) / "manifest.json"
    if not mpath.is_file():
        raise ValidationError("manifest.json: missing")
    try:
        raw = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"manifest.json: invalid JSON ({e})") from e
    missing = [f for f in _MANIFEST_FIELDS if f not in raw]
    if missing:
        raise ValidationError(f"manifest.json: missing fields {missing}")
    extra = [f for f in raw if f not in _MANIFEST_FIELDS]
    if extra:
        raise ValidationError(f"manifest.json: unknown fields {extra}")
    return DatasetManifest(
        n_samples=int(raw["n_samples"]),
        d_img=int(raw["d_img"]),
        d_text=int(raw["d_text"]),
        n_vertices=int(raw["n_vertices"]),
        value_width=int(raw["value_width"]),
        roi_names=tuple(str(s) for s in raw["roi_names"]),
        subject_id=str(raw["subject_id"]),
    )


def load_dataset(path) -> Dataset:
    """Load and fully validate an interchange directory; errors name the
    offending file or field. 32-bit payloads are widened to float64."""
    root = Path(path)
    m = load_manifest(root)
    fdt = _float_dtype(m.value_width)
    features = _read_array(root / "features.bin", fdt, m.n_samples * m.d_img, (m.n_samples, m.d_img))
    text = _read_array(root / "text_embeddings.bin", fdt, m.n_samples * m.d_text, (m.n_samples, m.d_text))
    voxels = _read_array(root / "voxels.bin", fdt, m.n_samples * m.n_vertices, (m.n_samples, m.n_vertices))
    nc = _read_array(root / "noise_ceiling.bin", fdt, m.n_vertices, (m.n_vertices,))
    labels = _read_array(root / "roi_labels.bin", np.dtype("<u4"), m.n_vertices, (m.n_vertices,))
    return Dataset(
        manifest=m,
        image_features=features.astype(np.float64),
        text_embeddings=text.astype(np.float64),
        voxel_targets=voxels.astype(np.float64),
        noise_ceiling=nc.astype(np.float64),
        roi_labels=labels.astype(np.uint32),
    )


def write_dataset(ds: Dataset, path) -> None:
    """Write the interchange files; load_dataset of the result equals ds
    (bit-exact at the declared width)."""
    ds.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    m = ds.manifest
    manifest_doc = {
        "n_samples": m.n_samples,
        "d_img": m.d_img,
        "d_text": m.d_text,
        "n_vertices": m.n_vertices,
        "value_width": m.value_width,
        "roi_names": list(m.roi_names),
        "subject_id": m.subject_id,
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    fdt = _float_dtype(m.value_width)
    ds.image_features.astype(fdt).tofile(root / "features.bin")
    ds.text_embeddings.astype(fdt).tofile(root / "text_embeddings.bin")
    ds.voxel_targets.astype(fdt).tofile(root / "voxels.bin")
    ds.noise_ceiling.astype(fdt).tofile(root / "noise_ceiling.bin")
    ds.roi_labels.astype("<u4").tofile(root / "roi_labels.bin")


# ---------------------------------------------------------------------------
# Ground-truth sidecar (written next to a generated dataset so oracles can
# run without regenerating)
# ---------------------------------------------------------------------------

_GT_BLOBS = (
    ("img_loadings", "gt_img_loadings.bin"),
    ("text_loadings", "gt_text_loadings.bin"),
    ("voxel_loadings", "gt_voxel_loadings.bin"),
    ("latents", "gt_latents.bin"),
    ("noise_ceiling", "gt_noise_ceiling.bin"),
)


def write_ground_truth(gt: SyntheticGroundTruth, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": 1,
        "spec": {
            "n_samples": gt.spec.n_samples,
            "latent_dim": gt.spec.latent_dim,
            "d_img": gt.spec.d_img,
            "d_text": gt.spec.d_text,
            "n_vertices": gt.spec.n_vertices,
            "noise_std_img": gt.spec.noise_std_img,
            "noise_std_text": gt.spec.noise_std_text,
            "noise_std_voxel": gt.spec.noise_std_voxel,
            "seed": gt.spec.seed,
        },
    }
    (root / "ground_truth.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for attr, fname in _GT_BLOBS:
        getattr(gt, attr).astype("<f8").tofile(root / fname)


def load_ground_truth(path) -> SyntheticGroundTruth:
    root = Path(path)
    gpath = root / "ground_truth.json"
    if not gpath.is_file():
        raise ValidationError("ground_truth.json: missing")
    doc = json.loads(gpath.read_text(encoding="utf-8"))
    if doc.get("schema_version") != 1:
        raise ValidationError("ground_truth.json: unsupported schema_version")
    spec = SyntheticSpec(**doc["spec"])
    r = spec.latent_dim
    shapes = {
        "img_loadings": (spec.d_img, r),
        "text_loadings": (spec.d_text, r),
        "voxel_loadings": (spec.n_vertices, r),
        "latents": (spec.n_samples, r),
        "noise_ceiling": (spec.n_vertices,),
    }
    arrays = {}
    for attr, fname in _GT_BLOBS:
        shape = shapes[attr]
        arrays[attr] = _read_array(root / fname, np.dtype("<f8"), int(np.prod(shape)), shape)
    return SyntheticGroundTruth(spec=spec, **arrays)
