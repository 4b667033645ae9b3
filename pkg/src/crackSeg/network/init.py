import numpy as np

from crackSeg.config import config
from crackSeg.network.unet import Model


def he_init(model: Model, seed: int = 0) -> None:
    """
    He-normal initialization: conv, transposed-conv and FC weights ~ N(0, sqrt(2 / fan_in)),
    biases 0, BN gamma 1 / beta 0, running mean 0 / var 1.

    When the model config names a pretrained encoder checkpoint, the encoder tensors are then
    overwritten from it and only the decoder and head keep their random draws.

    Args:
        model (Model): Model to initialize in place.
        seed (int): Seed of the weight draws; equal seeds give bitwise-equal parameters.
    """
    rng = np.random.default_rng(seed)
    for module in model.modules():
        module.reset_parameters(rng)

    pretrained = model.config.pretrained_encoder_path
    if pretrained:
        from crackSeg.network.checkpoint import load_checkpoint

        config.logger.info(f"Loading pretrained encoder from {pretrained}")
        load_checkpoint(model, pretrained, prefix="encoder.")
