"""facedub: audio-driven face visual dubbing.

Reference-face feature maps are deformed channel by channel with predicted
affine transforms and decoded against the source features to inpaint the
masked mouth region, driven by per-frame acoustic features.
"""

from .adaat import (ChannelAffineParams, adaat_deform, grid_sample_bilinear,
                    identity_params, make_affine_grid)
from .checkpoints import (Checkpoint, ensure_config_matches, load_checkpoint,
                          save_checkpoint)
from .errors import (CheckpointError, ConfigurationError, ContractError,
                     FacedubError, IngestionError, MetricsError,
                     SamplingError, TrainingDivergedError)
from .infer import DubResult, dub_video, paste_back
from .losses import (IdentityExtractor, LossWeights, PerceptualExtractor,
                     RandomConvExtractor, Vgg19Extractor, lsgan_d_loss,
                     lsgan_g_loss, perception_loss, sync_loss, total_g_loss)
from .metrics import evaluate_dirs, psnr, read_report, ssim, write_report
from .networks import (DubbingGenerator, NetworkConfig, PatchDiscriminator,
                       SyncScorer, build_frame_discriminator, build_generator,
                       build_sequence_discriminator, build_sync_scorer)
from .train import (TrainConfig, load_generator, load_sync_scorer,
                    sync_separation, train_dinet, train_syncnet)

__version__ = "0.1.0"

__all__ = [
    "ChannelAffineParams",
    "adaat_deform",
    "grid_sample_bilinear",
    "identity_params",
    "make_affine_grid",
    "Checkpoint",
    "ensure_config_matches",
    "load_checkpoint",
    "save_checkpoint",
    "FacedubError",
    "ContractError",
    "IngestionError",
    "SamplingError",
    "ConfigurationError",
    "CheckpointError",
    "TrainingDivergedError",
    "MetricsError",
    "DubResult",
    "dub_video",
    "paste_back",
    "IdentityExtractor",
    "LossWeights",
    "PerceptualExtractor",
    "RandomConvExtractor",
    "Vgg19Extractor",
    "lsgan_d_loss",
    "lsgan_g_loss",
    "perception_loss",
    "sync_loss",
    "total_g_loss",
    "evaluate_dirs",
    "psnr",
    "read_report",
    "ssim",
    "write_report",
    "DubbingGenerator",
    "NetworkConfig",
    "PatchDiscriminator",
    "SyncScorer",
    "build_frame_discriminator",
    "build_generator",
    "build_sequence_discriminator",
    "build_sync_scorer",
    "TrainConfig",
    "load_generator",
    "load_sync_scorer",
    "sync_separation",
    "train_dinet",
    "train_syncnet",
    "__version__",
]
