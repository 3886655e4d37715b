"""Run configuration: ``key = value`` files with sections, overridable per key.

Every field of :class:`RunConfig` lives in one section of the file.  The
resolved configuration is echoed back into run manifests, and a manifest is
itself a valid config file, so any run can be replayed from its manifest.
"""

import configparser
from dataclasses import dataclass, fields

from .data.scenes import SceneSpec
from .errors import ContractError, UnsupportedConfigError
from .model import ModelConfig
from .training import TrainConfig

SECTIONS = ("run", "model", "train", "data")
SAMPLE_PATTERNS = ("random", "grid", "top", "middle", "bottom")


def _ints(text):
    if text is None or isinstance(text, tuple):
        return text
    text = str(text).strip()
    if text in ("", "none", "None"):
        return None
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


def _optional_float(text):
    if text is None or isinstance(text, float):
        return text
    text = str(text).strip()
    return None if text in ("", "none", "None") else float(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ContractError(f"not a boolean: {text!r}")


# field name -> (section, parser)
SCHEMA = {
    "seed": ("run", int),
    "out": ("run", str),
    "dim": ("model", int),
    "L": ("model", int),
    "n_final": ("model", int),
    "heads": ("model", int),
    "ffn_mult": ("model", int),
    "encoder_widths": ("model", _ints),
    "cspn_iters": ("model", int),
    "n_fixed": ("model", int),
    "raw_coords": ("model", _bool),
    "use_relative_range": ("model", _bool),
    "lr": ("train", float),
    "steps": ("train", int),
    "batch_size": ("train", int),
    "beta": ("train", float),
    "refined_weight": ("train", float),
    "width": ("data", int),
    "height": ("data", int),
    "d_min": ("data", float),
    "d_max": ("data", float),
    "n_planes": ("data", int),
    "n_boxes": ("data", int),
    "n_spheres": ("data", int),
    "texture": ("data", str),
    "pattern": ("data", str),
    "n": ("data", int),
    "stride": ("data", int),
    "alpha": ("data", float),
    "noise": ("data", float),
    "sigma": ("data", _optional_float),
}


@dataclass
class RunConfig:
    """Desk-scale defaults; see ``PAPER_*`` in :mod:`pddm.training` for full scale."""

    seed: int = 0
    out: str = "out"
    # model
    dim: int = 32
    L: int = 5
    n_final: int = 64
    heads: int = 2
    ffn_mult: int = 4
    encoder_widths: tuple = None
    cspn_iters: int = 12
    n_fixed: int = 500
    raw_coords: bool = False
    use_relative_range: bool = True
    # optimiser
    lr: float = 3e-3
    steps: int = 500
    batch_size: int = 1
    beta: float = 0.1
    refined_weight: float = 1.0
    # data
    width: int = 64
    height: int = 48
    d_min: float = 1.0
    d_max: float = 8.0
    n_planes: int = 1
    n_boxes: int = 3
    n_spheres: int = 1
    texture: str = "checker"
    pattern: str = "random"
    n: int = 500
    stride: int = 8
    alpha: float = 0.35
    noise: float = 0.0
    sigma: float = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                setattr(self, f.name, SCHEMA[f.name][1](value))

    def validate(self):
        """Raise ContractError / UnsupportedConfigError on an unusable configuration."""
        if self.L < 1 or self.n_final % (2 ** (self.L - 1)):
            raise ContractError(f"n_final={self.n_final} is not divisible by 2^(L-1)={2 ** (self.L - 1)}")
        if self.width % 16 or self.height % 16 or self.width <= 0 or self.height <= 0:
            raise ContractError(f"extents {self.width}x{self.height} must be positive multiples of 16")
        div = 2 ** (self.L - 1)
        if self.width % div or self.height % div:
            raise ContractError(f"extents {self.width}x{self.height} must be divisible by 2^(L-1)={div}")
        if self.pattern not in SAMPLE_PATTERNS:
            raise ContractError(f"pattern must be one of {SAMPLE_PATTERNS}, got {self.pattern!r}")
        if not 0.0 <= self.noise <= 1.0:
            raise ContractError(f"noise corruption probability {self.noise} outside [0, 1]")
        if self.batch_size < 1:
            raise UnsupportedConfigError("batch_size must be at least 1")
        if self.steps < 0:
            raise ContractError("steps must be non-negative")
        self.model_config()
        self.scene_spec().validate()
        return self

    def model_config(self):
        return ModelConfig(
            dim=self.dim, L=self.L, n_final=self.n_final, heads=self.heads, ffn_mult=self.ffn_mult,
            encoder_widths=self.encoder_widths, cspn_iters=self.cspn_iters, n_fixed=self.n_fixed,
            raw_coords=self.raw_coords, use_relative_range=self.use_relative_range,
            dataset_d_min=self.d_min, dataset_d_max=self.d_max, coord_seed=self.seed)

    def train_config(self):
        return TrainConfig(steps=self.steps, lr=self.lr, beta=self.beta, refined_weight=self.refined_weight)

    def scene_spec(self, seed=None):
        return SceneSpec(
            width=self.width, height=self.height, d_min=self.d_min, d_max=self.d_max,
            n_planes=self.n_planes, n_boxes=self.n_boxes, n_spheres=self.n_spheres,
            texture=self.texture, seed=self.seed if seed is None else seed)

    def with_overrides(self, overrides):
        """Copy with the non-None entries of ``overrides`` (raw strings allowed) applied."""
        data = self.as_dict()
        for key, value in overrides.items():
            if key not in SCHEMA:
                raise ContractError(f"unknown config key {key!r}")
            if value is not None:
                data[key] = value
        return RunConfig(**data)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_ini(self):
        parser = configparser.ConfigParser()
        parser.optionxform = str
        for section in SECTIONS:
            parser[section] = {}
        for key, value in self.as_dict().items():
            if isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            elif value is None:
                text = "none"
            else:
                text = repr(value) if isinstance(value, float) else str(value)
            parser[SCHEMA[key][0]][key] = text
        return parser


def load_config(path=None, overrides=None):
    """Defaults <- file at ``path`` <- ``overrides``; unknown keys are rejected.

    Sections other than the four configuration sections (for example the
    ``artifacts`` section of a manifest) are ignored.
    """
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        if not parser.read(path):
            raise ContractError(f"cannot read config file {path}")
        values = {}
        for section in parser.sections():
            if section not in SECTIONS:
                continue
            for key, text in parser[section].items():
                if key not in SCHEMA:
                    raise ContractError(f"{path}: unknown key {key!r} in [{section}]")
                if SCHEMA[key][0] != section:
                    raise ContractError(f"{path}: key {key!r} belongs in [{SCHEMA[key][0]}], not [{section}]")
                values[key] = text
        try:
            cfg = cfg.with_overrides(values)
        except ValueError as exc:
            raise ContractError(f"{path}: {exc}") from exc
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def write_ini(parser, path):
    with open(path, "w") as fh:
        parser.write(fh)


def tiny_config(**kw):
    """The smallest configuration used for whole-model gradient checks."""
    base = dict(width=16, height=16, dim=8, L=3, n_final=8, n_fixed=16, n=64, cspn_iters=3,
                n_boxes=1, n_spheres=1)
    base.update(kw)
    return RunConfig(**base)
