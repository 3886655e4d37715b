"""The full two-branch depth completion network and its forward pass."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import binning
from .bim import BIM, DEFAULT_N_FIXED, extract_coords
from .decoupling import StageSchedule, TransformerBlock
from .errors import ContractError, DegenerateRangeError
from .modulating import CSPN_ITERS, PPB, CSPNAffinity, DecoderBlock, Encoder, cspn_refine, encode
from .numerics import ParamStore

# appendix channel widths (512, 256, 128, 64, 64) scaled by 1/8
TOY_ENCODER_WIDTHS = (64, 32, 16, 8, 8)


@dataclass
class ModelConfig:
    dim: int = 32
    L: int = 5
    n_final: int = 64
    heads: int = 2
    ffn_mult: int = 4
    encoder_widths: tuple = None
    decoder_widths: tuple = None
    cspn_iters: int = CSPN_ITERS
    n_fixed: int = DEFAULT_N_FIXED
    raw_coords: bool = False
    use_relative_range: bool = True
    dataset_d_min: float = 1.0
    dataset_d_max: float = 8.0
    coord_seed: int = 0

    def __post_init__(self):
        if self.encoder_widths is None:
            base = TOY_ENCODER_WIDTHS
            if self.L <= len(base):
                self.encoder_widths = base[len(base) - self.L:]
            else:
                self.encoder_widths = tuple([base[0]] * (self.L - len(base))) + base
        self.encoder_widths = tuple(int(c) for c in self.encoder_widths)
        if self.decoder_widths is None:
            self.decoder_widths = self.encoder_widths[1:]
        self.decoder_widths = tuple(int(c) for c in self.decoder_widths)
        self.validate()

    def validate(self):
        StageSchedule(self.L, self.n_final)
        if len(self.encoder_widths) != self.L:
            raise ContractError(f"need {self.L} encoder widths, got {len(self.encoder_widths)}")
        if len(self.decoder_widths) != self.L - 1:
            raise ContractError(f"need {self.L - 1} decoder widths, got {len(self.decoder_widths)}")
        if self.dim % self.heads:
            raise ContractError(f"dim {self.dim} is not divisible by {self.heads} heads")
        binning.DepthRange(self.dataset_d_min, self.dataset_d_max)

    @property
    def schedule(self):
        return StageSchedule(self.L, self.n_final)

    @property
    def dataset_range(self):
        return binning.DepthRange(self.dataset_d_min, self.dataset_d_max, binning.DATASET_ABSOLUTE)

    @property
    def divisor(self):
        return 2 ** (self.L - 1)


@dataclass
class StageOutput:
    stage: int
    features: object
    probs: object
    partition: binning.BinPartition
    centers: object
    depth: object

    @property
    def resolution(self):
        return tuple(self.depth.shape)


@dataclass
class ForwardResult:
    stages: list
    refined: object
    affinity: object
    scene_range: binning.DepthRange
    seed_bins: object = None
    embeddings: list = field(default_factory=list)


class DepthCompletionModel:
    """Bins initialising module + L decoupling stages interleaved with the decoder."""

    def __init__(self, config=None, seed=0, store=None):
        self.config = config = config or ModelConfig()
        self.store = store if store is not None else ParamStore(seed)
        s = self.store
        sched = config.schedule
        counts = sched.bin_counts
        enc = config.encoder_widths
        dec = config.decoder_widths
        self.bim = BIM(s, config.dim, counts[0], config.n_fixed)
        self.encoder = Encoder(s, enc)
        self.blocks = []
        self.decoders = []
        # channels of the feature entering stage l: encoder top, then decoder outputs
        c_in = [enc[0]] + list(dec)
        for l in range(config.L):
            last = l == config.L - 1
            self.blocks.append(TransformerBlock(
                s, f"stage{l + 1}.transformer", config.dim, counts[l], c_in[l],
                heads=config.heads, ffn_mult=config.ffn_mult, is_last=last))
            if not last:
                self.decoders.append(DecoderBlock(
                    s, f"stage{l + 1}.decoder", c_in[l], enc[l + 1], config.dim, dec[l], counts[l]))
        c_final = dec[-1] if dec else enc[0]
        self.ppb = PPB(s, f"stage{config.L}.ppb", c_in[-1], enc[-1], config.dim, c_final, counts[-1])
        aff_stage = max(config.L - 2, 0)
        self.cspn = CSPNAffinity(s, "cspn", counts[aff_stage] + 2)

    def scene_range(self, sparse):
        dataset = self.config.dataset_range
        if not self.config.use_relative_range:
            return dataset
        try:
            rel = binning.relative_range(sparse)
        except DegenerateRangeError as exc:
            warnings.warn(f"{exc}; falling back to the dataset depth range")
            return dataset
        lo = min(max(rel.d_min, dataset.d_min), dataset.d_max)
        hi = max(min(rel.d_max, dataset.d_max), dataset.d_min)
        if not hi > lo:
            return dataset
        return binning.DepthRange(lo, hi, binning.SCENE_RELATIVE)

    def forward(self, rgb, sparse):
        cfg = self.config
        h, w = np.shape(rgb)[:2]
        if h % cfg.divisor or w % cfg.divisor:
            raise ContractError(f"image {h}x{w} is not divisible by {cfg.divisor}")
        dataset = cfg.dataset_range
        scene = self.scene_range(sparse)
        coords = extract_coords(sparse, cfg.n_fixed, cfg.coord_seed, cfg.raw_coords)
        feats = encode(self.encoder, rgb, sparse.to_raster(), depth_scale=dataset.d_max)

        B = self.bim(coords)
        seed_bins = B
        F_prev = feats[0]
        stages, embeddings = [], []
        for l, block in enumerate(self.blocks):
            B_hat = block.refine(B, block.project(F_prev))
            embeddings.append(B_hat)
            part = block.partition(B_hat, scene, dataset)
            centers = binning.bin_centers(part)
            if l < cfg.L - 1:
                hh, ww = F_prev.shape[:2]
                guide = block.inverse_project(B_hat, (2 * hh, 2 * ww))
                F, probs = self.decoders[l](F_prev, guide, feats[l + 1], B_hat)
            else:
                guide = block.inverse_project(B_hat, F_prev.shape[:2])
                F = None
                probs = self.ppb(F_prev, guide, feats[-1], B_hat)
            depth = binning.depth_from_probs(probs, centers)
            stages.append(StageOutput(l + 1, F, probs, part, centers, depth))
            if l < cfg.L - 1:
                B = block.split_bins(B_hat)
                F_prev = F

        aff_src = stages[-2].probs if cfg.L >= 2 else stages[-1].probs
        affinity = self.cspn(aff_src)
        anchors = sparse.to_raster()
        refined = cspn_refine(stages[-1].depth, affinity, anchors > 0, anchors, cfg.cspn_iters)
        return ForwardResult(stages, refined, affinity, scene, seed_bins, embeddings)

    __call__ = forward

    def num_parameters(self, prefix=""):
        return self.store.num_parameters(prefix)


def forward(model, rgb, sparse):
    return model.forward(rgb, sparse)
