"""The full network: encoder, partial decoder, CFP modules and A-RA stages."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .ara import AraStage, decode_chain
from .backbone import Backbone, BackboneConfig
from .cfp import CFP, CfpConfig
from .decoder import PartialDecoder
from .nn import Module
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    channels: int = 32
    cfp: CfpConfig = field(default_factory=CfpConfig)

    def __post_init__(self):
        if self.cfp.channels != self.channels:
            raise ValueError("CFP width must equal the decoder width")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone"]["stage_channels"] = list(self.backbone.stage_channels)
        d["backbone"]["stage_strides"] = list(self.backbone.stage_strides)
        d["cfp"]["dilation_rates"] = list(self.cfp.dilation_rates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        bb = dict(d["backbone"])
        bb["stage_channels"] = tuple(bb["stage_channels"])
        bb["stage_strides"] = tuple(bb["stage_strides"])
        cfp = dict(d["cfp"])
        cfp["dilation_rates"] = tuple(cfp["dilation_rates"])
        return cls(BackboneConfig(**bb), d["channels"], CfpConfig(**cfp))

    @classmethod
    def build(cls, base_channels: int = 16, channels: int = 32, variant: str = "regular",
              fusion: str = "concat") -> "ModelConfig":
        return cls(BackboneConfig(base_channels=base_channels), channels,
                   CfpConfig(channels=channels, variant=variant, fusion=fusion))


class ModelOutput(NamedTuple):
    global_map: Tensor
    s5: Tensor
    s4: Tensor
    s3: Tensor
    prediction: Tensor

    def side_maps(self) -> list[tuple[str, Tensor]]:
        return [("S_g", self.global_map), ("S_5", self.s5), ("S_4", self.s4), ("S_3", self.s3)]


class CaraNet(Module):
    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        c3, c4, c5 = config.backbone.stage_channels[2:]
        self.backbone = Backbone(rng, config.backbone)
        self.decoder = PartialDecoder(rng, (c3, c4, c5), config.channels)
        self.cfp3 = CFP(rng, config.cfp)
        self.cfp4 = CFP(rng, config.cfp)
        self.cfp5 = CFP(rng, config.cfp)
        self.stage3 = AraStage(rng, config.channels)
        self.stage4 = AraStage(rng, config.channels)
        self.stage5 = AraStage(rng, config.channels)

    def __call__(self, image: Tensor) -> ModelOutput:
        feats = self.backbone.encode(image)
        r3, r4, r5 = self.decoder.reduce(feats.f3, feats.f4, feats.f5)
        global_map = self.decoder.aggregate(r3, r4, r5)
        side = decode_chain(self.cfp3(r3), self.cfp4(r4), self.cfp5(r5), global_map,
                            (self.stage3, self.stage4, self.stage5), image.shape[2:])
        return ModelOutput(global_map, side.s5, side.s4, side.s3, side.prediction)

    def predict(self, image: np.ndarray) -> np.ndarray:
        """Probability map(s) for a (C, H, W) or (N, C, H, W) array."""
        x = np.asarray(image, dtype=np.float64)
        single = x.ndim == 3
        if single:
            x = x[None]
        prob = self(Tensor(x)).prediction.data[:, 0]
        return prob[0] if single else prob
