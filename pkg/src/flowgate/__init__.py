"""flowgate: disentangled video prediction with classical components.

Motion propagation (variational flow fitting, constant-velocity
extrapolation, backward warping) is separated from generation (pull-push
inpainting) by an occlusion map computed from the forward flow's splat
density. A synthetic moving-sprite benchmark with exact ground truth makes
every stage quantitatively checkable.
"""

from .core import (
    BorderMode,
    Clip,
    EnergyMap,
    FlowDirection,
    FlowField,
    Frame,
    OcclusionMap,
    Pyramid,
    build_pyramid,
    image_gradient,
    resize_bilinear,
    resize_flow,
    to_grayscale,
)
from .fileio import (
    read_flo,
    read_frame_png,
    read_mask_png,
    write_flo,
    write_frame_png,
    write_mask_png,
)
from .flowpred import (
    ExtrapolationMode,
    FlowPredictor,
    FlowSolverConfig,
    GroundTruthOracle,
    SolverTrace,
    VariationalExtrapolator,
    ZeroFlowPredictor,
    estimate_flow,
    extrapolate_flow,
    predict_flows,
)
from .inpaint import PartialConvLayer, compose, partial_conv, pullpush_inpaint
from .losses import (
    FeatureStack,
    LabelMap,
    LossConfig,
    LossTerm,
    Normalization,
    flow_objective,
    inpaint_objective,
    loss_gradient,
    masked_cross_entropy,
    masked_pixel_loss,
    perceptual_loss,
    smoothness_loss,
    ssim,
    style_loss,
    total_variation,
)
from .metrics import Report, StepMetrics, endpoint_error, evaluate_prediction, psnr
from .pipeline import (
    FeedbackMode,
    InpainterKind,
    MaskSource,
    PipelineConfig,
    Prediction,
    PredictorKind,
    predict_multi,
    predict_next,
    run_ablation,
)
from .synthbench import (
    LabeledClip,
    MaskClass,
    SceneSpec,
    Xorshift64Star,
    generate_clip,
    generate_suite,
    iou,
)
from .viz import flow_to_color, overlay_mask
from .warp import backward_warp, occlusion_from_energy, occlusion_pipeline, splat_energy

__version__ = "0.1.0"
