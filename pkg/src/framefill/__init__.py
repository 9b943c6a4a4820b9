"""framefill: feed-forward video inpainting.

Holes are completed per frame by aligning reference frames with a masked
affine model, copying their content with similarity-weighted masked-softmax
matching, pasting it at image resolution, and synthesizing never-visible
pixels by diffusion. Reference update and bidirectional blending keep the
result temporally coherent.
"""

from .align import (
    AffineParams,
    AlignConfig,
    alignment_gradient,
    alignment_objective,
    compose_affine,
    estimate_affine,
    invert_affine,
    warp_affine,
)
from .datasynth import SynthParams, composite_holes, synth_background, synth_mask_sequence
from .errors import (
    AlignmentFailure,
    ConfigError,
    FramefillError,
    InputDataError,
    NumericFailure,
)
from .features import EncoderSpec, FeatureMap, encode, normalize_features
from .losses import (
    FeatureBackbone,
    LossComponents,
    LossWeights,
    default_backbone,
    gram_matrix,
    identity_backbone,
    perceptual_style_loss,
    region_losses,
    total_loss,
    tv_loss,
)
from .matcher import (
    MatchInput,
    MatchResult,
    aggregate,
    global_similarity,
    masked_softmax,
    match_context,
    saliency,
)
from .media import (
    Frame,
    HoleMask,
    VideoClip,
    VisibilityMap,
    downsample_visibility,
    load_clip,
    mask_to_visibility,
    save_clip,
)
from .metrics import flicker_metric, psnr, ssim, temporal_profile
from .paste import PasteInput, composite_paste, diffusion_fill, upsample_weights
from .pipeline import (
    InpaintConfig,
    PipelineReport,
    blend_passes,
    inpaint_frame,
    inpaint_video,
    select_references,
)

__version__ = "0.1.0"
