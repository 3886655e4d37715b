"""Synthetic RGB-D scenes built from planes, boxes and spheres."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError

TEXTURES = ("flat", "checker", "noise")


@dataclass
class Plane:
    """depth(u, v) = depth + du * u + dv * v, with u, v in [0, 1]."""

    depth: float
    du: float = 0.0
    dv: float = 0.0
    color: tuple = (0.6, 0.6, 0.6)


@dataclass
class Box:
    """Fronto-parallel rectangle; bounds are fractions of the image."""

    u0: float
    v0: float
    u1: float
    v1: float
    depth: float
    color: tuple = (0.8, 0.3, 0.2)


@dataclass
class Sphere:
    cu: float
    cv: float
    radius: float  # fraction of image width
    depth: float  # depth at the silhouette rim
    color: tuple = (0.2, 0.4, 0.8)


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 48
    d_min: float = 1.0
    d_max: float = 8.0
    n_planes: int = 1
    n_boxes: int = 3
    n_spheres: int = 1
    texture: str = "checker"
    seed: int = 0
    primitives: list = field(default=None, repr=False)

    def validate(self):
        if self.width <= 0 or self.height <= 0 or self.width % 16 or self.height % 16:
            raise ContractError(f"extents {self.width}x{self.height} must be positive multiples of 16")
        if not (0 < self.d_min < self.d_max):
            raise ContractError(f"invalid depth range [{self.d_min}, {self.d_max}]")
        if self.texture not in TEXTURES:
            raise ContractError(f"texture must be one of {TEXTURES}")


def _coords(height, width):
    v, u = np.meshgrid(np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij")
    return u, v


def render(width, height, primitives, d_min=None, d_max=None, texture="flat", seed=0):
    """Z-buffer the primitives; returns (image in [0,1], depth in meters)."""
    u, v = _coords(height, width)
    depth = np.full((height, width), np.inf)
    color = np.zeros((height, width, 3))
    for prim in primitives:
        if isinstance(prim, Plane):
            d = prim.depth + prim.du * u + prim.dv * v
            mask = np.ones_like(d, dtype=bool)
        elif isinstance(prim, Box):
            mask = (u >= prim.u0) & (u <= prim.u1) & (v >= prim.v0) & (v <= prim.v1)
            d = np.full_like(u, prim.depth)
        elif isinstance(prim, Sphere):
            aspect = height / width
            r2 = ((u - prim.cu) ** 2 + ((v - prim.cv) * aspect) ** 2) / prim.radius ** 2
            mask = r2 <= 1.0
            bulge = prim.radius * np.sqrt(np.clip(1.0 - r2, 0.0, 1.0))
            d = prim.depth - bulge * (prim.depth * 0.5)
        else:
            raise ContractError(f"unknown primitive {prim!r}")
        closer = mask & (d < depth)
        depth[closer] = d[closer]
        color[closer] = prim.color
    if not np.all(np.isfinite(depth)):
        raise ContractError("primitives do not cover the whole image; add a background plane")
    lo = depth.min() if d_min is None else d_min
    hi = depth.max() if d_max is None else d_max
    depth = np.clip(depth, lo, hi)

    span = max(hi - lo, 1e-9)
    shade = 1.0 - 0.6 * (depth - lo) / span
    image = color * shade[..., None]
    rng = np.random.default_rng(seed)
    if texture == "checker":
        cells = (np.floor(u * width / 8) + np.floor(v * height / 8)) % 2
        image = image * (0.85 + 0.15 * cells[..., None])
    elif texture == "noise":
        image = image + rng.normal(0.0, 0.03, size=image.shape)
    return np.clip(image, 0.0, 1.0), depth


def random_primitives(spec):
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.d_min, spec.d_max
    span = hi - lo
    prims = []
    # background wall, then floor-like tilted planes
    prims.append(Plane(hi - 0.05 * span * rng.random(), color=tuple(rng.uniform(0.3, 0.9, 3))))
    for _ in range(max(spec.n_planes - 1, 0)):
        base = lo + span * rng.uniform(0.3, 0.7)
        prims.append(Plane(base, du=span * rng.uniform(-0.2, 0.2), dv=-span * rng.uniform(0.1, 0.4),
                           color=tuple(rng.uniform(0.2, 0.9, 3))))
    for _ in range(spec.n_boxes):
        u0, v0 = rng.uniform(0.0, 0.7, 2)
        w, h = rng.uniform(0.15, 0.35, 2)
        prims.append(Box(u0, v0, u0 + w, v0 + h, lo + span * rng.uniform(0.05, 0.8),
                         color=tuple(rng.uniform(0.1, 1.0, 3))))
    for _ in range(spec.n_spheres):
        prims.append(Sphere(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.08, 0.2),
                            lo + span * rng.uniform(0.2, 0.7), color=tuple(rng.uniform(0.1, 1.0, 3))))
    return prims


def synth_scene(spec):
    """Render ``spec``; explicit ``spec.primitives`` override the random ones."""
    spec.validate()
    prims = spec.primitives if spec.primitives is not None else random_primitives(spec)
    return render(spec.width, spec.height, prims, spec.d_min, spec.d_max, spec.texture, spec.seed)
