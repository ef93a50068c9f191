"""Bridge contracts between the exporter (secondary component) and the
primary pipeline. Skipped entirely when the exporter is not built."""

import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from voxalign.cli import main
from voxalign.dataset import load_dataset
from voxalign.errors import ValidationError
from voxalign.evaluation import noise_normalized_score

REPO_ROOT = Path(__file__).resolve().parent.parent
EXPORTER_CLI = REPO_ROOT / "exporter" / "dist" / "cli.js"

pytestmark = pytest.mark.skipif(
    not EXPORTER_CLI.is_file() or shutil.which("node") is None,
    reason="secondary exporter component not built",
)


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    from PIL import Image

    root = tmp_path_factory.mktemp("bridge")
    images = root / "images"
    images.mkdir()
    rng = np.random.Generator(np.random.Philox(key=31))
    paths = []
    for i in range(24):
        arr = (rng.random((20, 20, 3)) * 255).astype(np.uint8)
        path = images / f"img_{i:02d}.png"
        Image.fromarray(arr).save(path)
        paths.append(path)
    listing = root / "list.txt"
    listing.write_text("\n".join(str(p) for p in paths) + "\n")
    out = root / "export"
    proc = subprocess.run(
        ["node", str(EXPORTER_CLI), "export", "--images", str(listing),
         "--out", str(out)],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    return out


def test_export_passes_validate_data(exported):
    assert main(["validate-data", str(exported)]) == 0


def test_zeros_policy_makes_eval_refuse(exported):
    ds = load_dataset(exported)
    assert np.all(ds.noise_ceiling == 0.0)
    with pytest.raises(ValidationError, match="all vertices excluded"):
        noise_normalized_score(np.zeros(ds.manifest.n_vertices), ds.noise_ceiling)


def test_end_to_end_eval_exits_with_defined_error(exported, tmp_path, capsys):
    # A checkpoint trained on the exported data evaluates to "metric
    # undefined" because every vertex is excluded.
    run = tmp_path / "run"
    assert main(["train", "--stage", "1", "--data", str(exported),
                 "--out", str(run), "--epochs", "1", "--pca-k", "2",
                 "--batch-size", "4"]) == 1
    err = capsys.readouterr().err
    assert "all vertices excluded" in err


def test_byte_sizes_match_manifest(exported):
    import json

    manifest = json.loads((exported / "manifest.json").read_text())
    bytes_per = manifest["value_width"] // 8
    expected = {
        "features.bin": manifest["n_samples"] * manifest["d_img"] * bytes_per,
        "text_embeddings.bin": manifest["n_samples"] * manifest["d_text"] * bytes_per,
        "voxels.bin": manifest["n_samples"] * manifest["n_vertices"] * bytes_per,
        "noise_ceiling.bin": manifest["n_vertices"] * bytes_per,
        "roi_labels.bin": manifest["n_vertices"] * 4,
    }
    for name, size in expected.items():
        assert (exported / name).stat().st_size == size
