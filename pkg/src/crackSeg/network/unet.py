"""U-Net with a ResNet-34 encoder and SCSE-gated upsampling blocks."""
from collections import OrderedDict
from typing import Dict, List, Optional, Union

from crackSeg.config import config
from crackSeg.errors import DimensionError
from crackSeg.models.configs import LayerGroup, ModelConfig, parse_config
from crackSeg.network.layers import SCSE, BatchNorm2d, Conv2d, ConvTranspose2d, Module
from crackSeg.network.resnet import ResNetEncoder
from crackSeg.tensor import ops
from crackSeg.tensor.tensor import Parameter, Tensor

MODES = ("train", "eval")

_GROUP_PREFIXES = (
    ("encoder.stem.", LayerGroup.G1),
    ("encoder.stage1.", LayerGroup.G1),
    ("encoder.stage2.", LayerGroup.G1),
    ("encoder.stage3.", LayerGroup.G2),
    ("encoder.stage4.", LayerGroup.G2),
    ("decoder.", LayerGroup.G3),
    ("head.", LayerGroup.G3),
)


class UpBlock(Module):
    """ReLU -> BN -> (SCSE) -> 2x2 transposed conv, then concat with the 1x1-projected skip."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        skip_channels: Optional[int],
        use_scse: bool,
        reduction: int,
        dtype: str,
    ):
        super().__init__(dtype)
        self.bn = self.add_child("bn", BatchNorm2d(in_channels, dtype=dtype))
        self.scse = self.add_child("scse", SCSE(in_channels, reduction, dtype=dtype)) if use_scse else None
        self.upconv = self.add_child("upconv", ConvTranspose2d(in_channels, out_channels, dtype=dtype))
        self.skip = None
        if skip_channels is not None:
            self.skip = self.add_child("skip", Conv2d(skip_channels, out_channels, kernel=1, dtype=dtype))

    def upsample(self, x: Tensor, skip: Optional[Tensor], mode: str) -> Tensor:
        out = self.bn(ops.relu(x), mode)
        if self.scse is not None:
            out = self.scse(out, mode)
        out = self.upconv(out, mode)
        if self.skip is None:
            return out
        return ops.concat_channels(out, self.skip(skip, mode))


class Decoder(Module):
    """
    Five upsampling blocks from the 1/32 bottleneck back to full resolution.

    With base width b the blocks emit 4b, 2b, b, b/2 and b/4 channels from their transposed
    convs. Blocks 1-4 concatenate the projected skips of stage3, stage2, stage1 and the stem;
    block 5 has no skip.
    """

    def __init__(self, base_channels: int, use_scse: bool, reduction: int, dtype: str):
        super().__init__(dtype)
        b = base_channels
        plan = [
            (8 * b, 4 * b, 4 * b),
            (8 * b, 2 * b, 2 * b),
            (4 * b, b, b),
            (2 * b, b // 2, b),
            (b, b // 4, None),
        ]
        self.blocks: List[UpBlock] = []
        for index, (in_channels, out_channels, skip_channels) in enumerate(plan):
            block = UpBlock(in_channels, out_channels, skip_channels, use_scse, reduction, dtype)
            self.blocks.append(self.add_child(f"up{index + 1}", block))
        self.out_channels = b // 4

    def decode(self, features: List[Tensor], mode: str) -> Tensor:
        stem, stage1, stage2, stage3, bottleneck = features
        skips = [stage3, stage2, stage1, stem, None]
        out = bottleneck
        for block, skip in zip(self.blocks, skips):
            out = block.upsample(out, skip, mode)
        return out


class Head(Module):
    def __init__(self, in_channels: int, dtype: str):
        super().__init__(dtype)
        self.conv = self.add_child("conv", Conv2d(in_channels, 1, kernel=1, dtype=dtype))

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return ops.sigmoid(self.conv(x, mode))


class Model(Module):
    """
    Named-parameter registry over the fixed segmentation graph.

    Attributes:
        parameters (OrderedDict[str, Parameter]): Every learnable tensor, hierarchically named.
        buffers (OrderedDict[str, Tensor]): Batch-norm running statistics.
        layer_group (Dict[str, LayerGroup]): Group of each parameter and buffer.
        config (ModelConfig): The architecture switches this model was built from.
    """

    def __init__(self, model_config: ModelConfig):
        super().__init__(model_config.dtype)
        self.config = model_config
        self.encoder = self.add_child(
            "encoder",
            ResNetEncoder(
                model_config.input_channels,
                model_config.base_channels,
                model_config.blocks_per_stage,
                model_config.dtype,
            ),
        )
        self.decoder = self.add_child(
            "decoder",
            Decoder(model_config.base_channels, model_config.use_scse, model_config.scse_reduction, model_config.dtype),
        )
        self.head = self.add_child("head", Head(self.decoder.out_channels, model_config.dtype))

        self.parameters: "OrderedDict[str, Parameter]" = OrderedDict(self.named_parameters())
        for name, parameter in self.parameters.items():
            parameter.name = name
        self.buffers: "OrderedDict[str, Tensor]" = OrderedDict(self.named_buffers())
        self.layer_group: Dict[str, LayerGroup] = {
            name: _group_of(name) for name in list(self.parameters) + list(self.buffers)
        }

    def group_parameters(self, group: LayerGroup) -> List[Parameter]:
        return [p for name, p in self.parameters.items() if self.layer_group[name] == group]

    def trainable_parameters(self) -> List[Parameter]:
        return [p for p in self.parameters.values() if p.trainable]

    def encode(self, batch: Tensor, mode: str = "eval") -> Tensor:
        """Bottleneck activation (8b x S/32 x S/32)."""
        _check_input(self, batch, mode)
        return self.encoder(batch, mode)

    def forward(self, batch: Tensor, mode: str = "eval") -> Tensor:
        _check_input(self, batch, mode)
        features = self.encoder.features(batch, mode)
        return self.head(self.decoder.decode(features, mode), mode)


def _group_of(name: str) -> LayerGroup:
    for prefix, group in _GROUP_PREFIXES:
        if name.startswith(prefix):
            return group
    raise KeyError(f"No layer group for tensor {name}")


def _check_input(model: Model, batch: Tensor, mode: str) -> None:
    if mode not in MODES:
        raise DimensionError(f"mode must be one of {MODES}, got {mode!r}")
    if batch.ndim != 4:
        raise DimensionError(f"Expected an N x C x H x W batch, got shape {batch.shape}")
    n, c, h, w = batch.shape
    if c != model.config.input_channels:
        raise DimensionError(f"Expected {model.config.input_channels} input channels, got {c}")
    if h % config.SIZE_MULTIPLE or w % config.SIZE_MULTIPLE:
        message = f"Spatial size {h}x{w} must be divisible by {config.SIZE_MULTIPLE} (five 2x downsamplings)"
        config.logger.error(message)
        raise DimensionError(message)


def build_model(model_config: Union[ModelConfig, dict, None] = None) -> Model:
    """
    Build and He-initialize the network; encoder weights come from the pretrained
    checkpoint when one is configured.

    Args:
        model_config (ModelConfig | dict, optional): Architecture switches. Defaults to ModelConfig().

    Returns:
        Model: The initialized model.
    """
    from crackSeg.network.init import he_init

    model_config = parse_config(ModelConfig, model_config if model_config is not None else {})
    model = Model(model_config)
    he_init(model, model_config.init_seed)
    config.logger.info(
        f"Built model: {len(model.parameters)} parameter tensors, "
        f"{sum(p.data.size for p in model.parameters.values())} values, scse={model_config.use_scse}"
    )
    return model


def forward(model: Model, batch: Tensor, mode: str = "eval") -> Tensor:
    """Probability map N x 1 x H x W for an N x C x H x W batch; `mode` selects batch-norm behavior."""
    return model.forward(batch, mode)


def set_group_trainable(model: Model, group: LayerGroup, trainable: bool) -> None:
    """Freeze or unfreeze a layer group. Frozen batch norms also stop updating their running stats."""
    for parameter in model.group_parameters(group):
        parameter.trainable = trainable
        if not trainable:
            parameter.grad = None
    config.logger.debug(f"Layer group {group.value} trainable={trainable}")
