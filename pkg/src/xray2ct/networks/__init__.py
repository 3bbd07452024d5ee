from .vae import LatentGaussian, PerceptualVae, VolumeDecoder, VolumeEncoder
from .discriminator import PatchDiscriminator3d
from .condition import (
    ConditionAutoencoder,
    ConditionModel,
    DepthExpansion,
    ProjectionHead,
    fuse_views,
    view_frame_to_world,
)
from .unet import TimeConditionalUnet3d

__all__ = [
    "LatentGaussian",
    "PerceptualVae",
    "VolumeDecoder",
    "VolumeEncoder",
    "PatchDiscriminator3d",
    "ConditionAutoencoder",
    "ConditionModel",
    "DepthExpansion",
    "ProjectionHead",
    "fuse_views",
    "view_frame_to_world",
    "TimeConditionalUnet3d",
]
