"""
U-Net matting network: residual encoder without a stem max-pool, a
dilated spatial pyramid at the bottleneck, a bilinear-upsampling decoder
with skip connections and two sigmoid heads (matte and boundary).

Presets:
    (large, 1.0)  bottleneck blocks [3, 4, 23, 3]  (ResNet-101 layout)
    (small, 1.0)  basic blocks [2, 2, 2, 2]        (ResNet-18 layout)
    (small, 0.5)  same at half width
"""

import copy
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from utils.errors import ConfigError, InvalidInputError

DOWNSAMPLE = 16

PRESETS = {
    "large": ("bottleneck", (3, 4, 23, 3)),
    "small": ("basic", (2, 2, 2, 2)),
}
WIDTH_MULTIPLIERS = (1.0, 0.5)


@dataclass(frozen=True)
class NetworkConfig:
    encoder_depth: str = "small"
    width_multiplier: float = 1.0
    base_width: int = 32
    in_channels: int = 3
    head_channels: int = 1
    aspp_dilations: tuple = (1, 3, 6, 9)
    aspp_channels: int = 128
    decoder_channels: tuple = (128, 64, 48, 32)

    def validate(self):
        if self.encoder_depth not in PRESETS:
            raise ConfigError(f"unsupported encoder preset '{self.encoder_depth}'", "encoder_depth")
        if self.width_multiplier not in WIDTH_MULTIPLIERS:
            raise ConfigError(f"unsupported width multiplier {self.width_multiplier}", "width_multiplier")
        if self.in_channels != 3 or self.head_channels != 1:
            raise ConfigError("network takes 3 input channels and emits 1 channel per head")
        if len(self.decoder_channels) != 4:
            raise ConfigError("decoder_channels needs one width per decoder stage (4)", "decoder_channels")
        if self.base_width <= 0 or self.aspp_channels <= 0 or not self.aspp_dilations:
            raise ConfigError("widths must be positive and aspp_dilations non-empty")

    def to_dict(self):
        d = asdict(self)
        d["aspp_dilations"] = list(self.aspp_dilations)
        d["decoder_channels"] = list(self.decoder_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("aspp_dilations", "decoder_channels"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _scaled(c, mult):
    return max(4, int(round(c * mult)))


def conv_bn_relu(in_chs, out_chs, kernel=3, stride=1, dilation=1):
    pad = dilation * (kernel // 2)
    return nn.Sequential(
        nn.Conv2d(in_chs, out_chs, kernel, stride=stride, padding=pad, dilation=dilation, bias=False),
        nn.BatchNorm2d(out_chs),
        nn.ReLU(inplace=True),
    )


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, in_chs, chs, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_chs, chs, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(chs)
        self.conv2 = nn.Conv2d(chs, chs, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(chs)
        self.shortcut = None
        if stride != 1 or in_chs != chs:
            self.shortcut = nn.Sequential(nn.Conv2d(in_chs, chs, 1, stride, bias=False), nn.BatchNorm2d(chs))

    def forward(self, x):
        y = F.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        identity = x if self.shortcut is None else self.shortcut(x)
        return F.relu(y + identity)


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, in_chs, chs, stride=1):
        super().__init__()
        out_chs = chs * self.expansion
        self.conv1 = nn.Conv2d(in_chs, chs, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(chs)
        self.conv2 = nn.Conv2d(chs, chs, 3, stride, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(chs)
        self.conv3 = nn.Conv2d(chs, out_chs, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_chs)
        self.shortcut = None
        if stride != 1 or in_chs != out_chs:
            self.shortcut = nn.Sequential(nn.Conv2d(in_chs, out_chs, 1, stride, bias=False), nn.BatchNorm2d(out_chs))

    def forward(self, x):
        y = F.relu(self.bn1(self.conv1(x)))
        y = F.relu(self.bn2(self.conv2(y)))
        y = self.bn3(self.conv3(y))
        identity = x if self.shortcut is None else self.shortcut(x)
        return F.relu(y + identity)


class ResidualEncoder(nn.Module):
    """Four stages at strides 2, 4, 8, 16; the stem downsamples by a strided conv only"""

    def __init__(self, cfg):
        super().__init__()
        kind, blocks = PRESETS[cfg.encoder_depth]
        block = Bottleneck if kind == "bottleneck" else BasicBlock
        width = _scaled(cfg.base_width, cfg.width_multiplier)

        self.stem = conv_bn_relu(cfg.in_channels, width, kernel=7, stride=2)

        self.stages = nn.ModuleList()
        self.out_channels = []
        in_chs = width
        for i, n in enumerate(blocks):
            chs = width * (2 ** i)
            layers = []
            for j in range(n):
                stride = 2 if (i > 0 and j == 0) else 1
                layers.append(block(in_chs, chs, stride))
                in_chs = chs * block.expansion
            self.stages.append(nn.Sequential(*layers))
            self.out_channels.append(in_chs)

    def forward(self, x):
        feats = []
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


class DilatedPyramid(nn.Module):
    """Parallel 3x3 convs at several dilation rates fused by a 1x1 conv"""

    def __init__(self, in_chs, out_chs, dilations):
        super().__init__()
        self.branches = nn.ModuleList(conv_bn_relu(in_chs, out_chs, 3, dilation=d) for d in dilations)
        self.fuse = conv_bn_relu(out_chs * len(dilations), out_chs, kernel=1)

    def forward(self, x):
        return self.fuse(torch.cat([b(x) for b in self.branches], dim=1))


class DecoderStage(nn.Module):
    def __init__(self, in_chs, skip_chs, out_chs):
        super().__init__()
        self.block = nn.Sequential(
            conv_bn_relu(in_chs + skip_chs, out_chs),
            conv_bn_relu(out_chs, out_chs),
        )

    def forward(self, x, skip):
        x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        return self.block(torch.cat([x, skip], dim=1))


def _head(in_chs, out_chs):
    return nn.Sequential(
        nn.Conv2d(in_chs, in_chs, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(in_chs, out_chs, 1),
    )


class MattingNetwork(nn.Module):
    def __init__(self, config, init_seed=0):
        super().__init__()
        config.validate()
        self.config = config
        mult = config.width_multiplier

        self.encoder = ResidualEncoder(config)
        c1, c2, c3, c4 = self.encoder.out_channels
        aspp_chs = _scaled(config.aspp_channels, mult)
        d = [_scaled(c, mult) for c in config.decoder_channels]
        image_chs = _scaled(16, mult)

        self.aspp = DilatedPyramid(c4, aspp_chs, config.aspp_dilations)
        self.image_skip = conv_bn_relu(config.in_channels, image_chs)
        self.up8 = DecoderStage(aspp_chs, c3, d[0])
        self.up4 = DecoderStage(d[0], c2, d[1])
        self.up2 = DecoderStage(d[1], c1, d[2])
        self.up1 = DecoderStage(d[2], image_chs, d[3])
        self.matte_head = _head(d[3], config.head_channels)
        self.boundary_head = _head(d[3], config.head_channels)

        self._init_weights(init_seed)

    def _init_weights(self, init_seed):
        """Every parameter is drawn from a generator local to this network"""
        g = torch.Generator().manual_seed(int(init_seed))
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu", generator=g)
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        f1, f2, f3, f4 = self.encoder(x)
        y = self.aspp(f4)
        y = self.up8(y, f3)
        y = self.up4(y, f2)
        y = self.up2(y, f1)
        y = self.up1(y, self.image_skip(x))
        return torch.sigmoid(self.matte_head(y)), torch.sigmoid(self.boundary_head(y))


def build(config, init_seed=0):
    """Deterministic construction: identical (config, seed) gives identical parameters"""
    config.validate()
    return MattingNetwork(config, init_seed)


def forward(net, batch):
    """
    Run both heads on an N x 3 x H x W batch.

    Inputs are padded up to a multiple of the downsampling factor and the
    outputs cropped back, so both maps match the input size.
    """
    if batch.dim() != 4 or batch.shape[1] != net.config.in_channels:
        raise InvalidInputError(f"expected N x {net.config.in_channels} x H x W input, got {tuple(batch.shape)}")

    h, w = batch.shape[-2:]
    pad_h = (-h) % DOWNSAMPLE
    pad_w = (-w) % DOWNSAMPLE
    if pad_h or pad_w:
        mode = "reflect" if (pad_h < h and pad_w < w) else "replicate"
        batch = F.pad(batch, (0, pad_w, 0, pad_h), mode=mode)

    matte, boundary = net(batch)
    return matte[..., :h, :w], boundary[..., :h, :w]


def clone_parameters(src):
    """Deep copy; mutating one network never affects the other"""
    return copy.deepcopy(src)


def count_parameters(net):
    return sum(p.numel() for p in net.parameters())


def load_encoder_weights(net, state, strict=False):
    """Load externally supplied encoder weights (keys relative to the encoder)"""
    result = net.encoder.load_state_dict(state, strict=strict)
    return list(result.missing_keys), list(result.unexpected_keys)
