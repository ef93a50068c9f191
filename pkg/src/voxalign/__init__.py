"""voxalign: two-stage voxel encoding trainer with text-alignment
fine-tuning and noise-ceiling-normalized evaluation."""

from .config import TrainConfig, desk_stage1, desk_stage2, paper_stage1, paper_stage2
from .dataset import (
    Dataset,
    DatasetManifest,
    SplitSpec,
    SyntheticGroundTruth,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    pad_vertices,
    split_dataset,
    write_dataset,
)
from .evaluation import (
    EvalReport,
    emit_report,
    evaluate_predictions,
    noise_normalized_score,
    r2_per_vertex,
    roi_median_scores,
)
from .linalg import PcaModel, pca_fit, pca_project, pca_reconstruct, pearson_corr
from .losses import AlignConfig, LossValue, alignment_loss, grad_check, mse_loss, total_loss
from .model import (
    AlignmentMatrix,
    Checkpoint,
    ExtractorParams,
    ModelParams,
    VoxelHead,
    align_scores,
    apply_freeze,
    build_model,
    forward_extract,
    init_voxel_head_pca,
    load_checkpoint,
    predict_voxels,
    save_checkpoint,
)
from .trainer import (
    AblationReport,
    TrainRecord,
    optimizer_step,
    run_lambda_ablation,
    train_stage1,
    train_stage2,
)

__version__ = "0.1.0"
