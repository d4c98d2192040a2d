"""Generative 2D-to-3D human pose lifting with ordinal-depth scoring."""

from .datagen import (
    DatasetRecord,
    SynthConfig,
    build_dataset,
    generate_synthetic,
    read_dataset,
    split,
    write_dataset,
)
from .evaluation import (
    AblationCurve,
    EvalReport,
    ablation_curve,
    diversity_stats,
    mpjpe,
    pa_mpjpe,
    procrustes_align,
)
from .lifter import (
    BaselineModel,
    CvaeConfig,
    CvaeModel,
    SampleSet,
    baseline_gaussian_sample,
    baseline_regress,
    cvae_loss,
    gsnn_loss,
    hybrid_loss,
    kl_divergence,
    load_model,
    reparameterize,
    sample_candidates,
    save_model,
    train,
    train_baseline,
)
from .nn import RngStream
from .ordinal import (
    OrdinalMatrix,
    aggregate,
    corrupt_ordinals,
    mean_pose,
    oracle_select,
    ordinal_from_pose,
    sanitize,
    score,
    softmax_weights,
)
from .pose import (
    CameraIntrinsics,
    NormStats,
    bone_lengths,
    center_at_hip,
    denormalize,
    fit_norm_stats,
    normalize,
    project_perspective,
    rotate_about_vertical,
)
from .skeleton import H36M_SKELETON, Skeleton

__version__ = "0.1.0"
