"""Depth images, inverse-depth samples and synthetic planar scenes.

Pixel coordinates are ``(column, row)`` with the origin at the top-left
corner. Everything downstream works in ``(u, v, s/Z)`` space; no camera
intrinsics are involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely

from .errors import AllInvalid, DegenerateDepth, InvalidScene


@dataclass(frozen=True)
class DepthImage:
    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.depth.ndim != 2 or self.depth.size == 0:
            raise ValueError("depth must be a non-empty 2-D array")
        if self.valid.shape != self.depth.shape:
            raise ValueError("valid mask shape does not match depth")

    @classmethod
    def from_array(cls, depth) -> "DepthImage":
        """Wrap a raw depth array; nonpositive or non-finite depths are invalid."""
        depth = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(depth) & (depth > 0)
        clean = np.where(valid, depth, 0.0)
        return cls(depth=clean, valid=valid)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def shape(self):
        return self.depth.shape


@dataclass(frozen=True)
class SampleSet:
    x: np.ndarray  # (N, 2) pixel coordinates (column, row)
    y: np.ndarray  # (N,) scaled inverse depth s / Z
    s: float
    origin: np.ndarray  # (N,) flat pixel index row * width + column
    width: int
    height: int

    @property
    def n(self) -> int:
        return len(self.y)

    def points(self) -> np.ndarray:
        """Return the samples as an (N, 3) array of (u, v, y)."""
        return np.column_stack([self.x, self.y])

    def to_image(self, values, fill=0):
        """Scatter per-sample values back into a (height, width) image."""
        values = np.asarray(values)
        img = np.full(self.height * self.width, fill, dtype=values.dtype)
        img[self.origin] = values
        return img.reshape(self.height, self.width)


@dataclass
class Segmentation:
    """Per-pixel label map (0 = unlabeled) with optional per-label planes.

    ``planes`` maps a label to ``(unit_normal, offset)`` of the plane
    ``normal . (u, v, s/Z) = offset``.
    """

    labels: np.ndarray
    planes: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.labels.shape

    def region_labels(self) -> np.ndarray:
        lab = np.unique(self.labels)
        return lab[lab != 0]


def scale_factor(depth: DepthImage) -> float:
    """Scale factor that stretches inverse depth to the pixel-axis range.

    ``s = ((rows + cols) / 2) / ((1/z)_max - (1/z)_min)`` over valid pixels.
    """
    if not depth.valid.any():
        raise AllInvalid("depth image has no valid pixels")
    inv = 1.0 / depth.depth[depth.valid]
    span = float(inv.max() - inv.min())
    if span <= 0.0:
        raise DegenerateDepth("inverse depth has zero range")
    return (depth.height + depth.width) / 2.0 / span


def to_samples(depth: DepthImage, s: float) -> SampleSet:
    if not s > 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    rows, cols = np.nonzero(depth.valid)
    x = np.column_stack([cols, rows]).astype(np.float64)
    y = s / depth.depth[rows, cols]
    origin = rows * depth.width + cols
    return SampleSet(x=x, y=y, s=float(s), origin=origin.astype(np.int64),
                     width=depth.width, height=depth.height)


@dataclass(frozen=True)
class ScenePlane:
    """A plane in ``(u, v, q)`` space, ``q = 1/Z``, over a pixel polygon.

    The plane is ``normal . (u, v, q) = offset``; planes of the 3-D scene
    stay planar under this parameterisation.
    """

    normal: tuple
    offset: float
    polygon: tuple

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm == 0 or n[2] == 0:
            raise InvalidScene("plane normal must have a nonzero inverse-depth component")
        object.__setattr__(self, "normal", tuple(n / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)
        object.__setattr__(self, "polygon", tuple(tuple(map(float, p)) for p in self.polygon))

    @classmethod
    def from_gradient(cls, du, dv, q0, polygon) -> "ScenePlane":
        """Plane with inverse depth ``q = du*u + dv*v + q0``."""
        return cls(normal=(du, dv, -1.0), offset=-q0, polygon=polygon)

    def inverse_depth(self, u, v):
        nu, nv, nq = self.normal
        return (self.offset - nu * np.asarray(u) - nv * np.asarray(v)) / nq

    def scaled_normal(self, s: float) -> np.ndarray:
        """Unit normal of this plane in ``(u, v, s/Z)`` space."""
        nu, nv, nq = self.normal
        n = np.array([nu, nv, nq / s])
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class SyntheticScene:
    planes: tuple
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "planes", tuple(self.planes))
        if self.noise_sigma < 0:
            raise InvalidScene("noise_sigma must be nonnegative")
        if not 0 <= self.outlier_fraction < 1:
            raise InvalidScene("outlier_fraction must lie in [0, 1)")


def _support_masks(scene: SyntheticScene, width: int, height: int):
    polys = [shapely.Polygon(p.polygon) for p in scene.planes]
    for i, poly in enumerate(polys):
        if not poly.is_valid or poly.area == 0:
            raise InvalidScene(f"plane {i}: polygon is degenerate or self-intersecting")
        minx, miny, maxx, maxy = poly.bounds
        if minx < -0.5 or miny < -0.5 or maxx > width - 0.5 or maxy > height - 0.5:
            raise InvalidScene(f"plane {i}: support exits the {width}x{height} image")
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if polys[i].intersection(polys[j]).area > 1e-9:
                raise InvalidScene(f"planes {i} and {j} have overlapping supports")

    vv, uu = np.mgrid[0:height, 0:width]
    uu = uu.astype(np.float64)
    vv = vv.astype(np.float64)
    owner = np.zeros((height, width), dtype=np.int64)
    for i, poly in enumerate(polys):
        # boundary pixels shared by two supports go to the earlier plane
        inside = shapely.intersects_xy(poly, uu, vv) & (owner == 0)
        owner[inside] = i + 1
    return owner, uu, vv


def render_scene(scene: SyntheticScene, width: int, height: int, seed: int = 0):
    """Render a synthetic scene to a depth image and its ground truth.

    Noise is specified in scaled inverse-depth units (``s/Z``, with ``s``
    taken from the noiseless render) and applied to depth. Outlier pixels
    are drawn from the covered pixels and given uniform random depths
    within the noiseless depth range; they are labelled 0.

    Returns ``(DepthImage, Segmentation)``.
    """
    owner, uu, vv = _support_masks(scene, width, height)
    q = np.zeros((height, width))
    for i, plane in enumerate(scene.planes):
        m = owner == i + 1
        q[m] = plane.inverse_depth(uu[m], vv[m])
        if np.any(q[m] <= 0):
            raise InvalidScene(f"plane {i}: nonpositive depth over its support")

    covered = owner > 0
    depth = np.zeros((height, width))
    depth[covered] = 1.0 / q[covered]
    clean = DepthImage.from_array(depth)
    labels = owner.copy()
    planes = {}
    if not covered.any():
        return clean, Segmentation(labels=labels, planes=planes)

    rng = np.random.default_rng(seed)
    idx = np.flatnonzero(covered)
    try:
        s_ref = scale_factor(clean)
    except DegenerateDepth:
        # fronto-parallel scenes: any positive scale will do
        s_ref = (width + height) / 2.0 / float(q[covered].max())

    noisy = depth.copy()
    if scene.noise_sigma > 0:
        e = rng.normal(0.0, scene.noise_sigma, size=idx.size)
        yq = s_ref * q.flat[idx] + e
        if np.any(yq <= 0):
            raise InvalidScene("noise drives inverse depth nonpositive")
        noisy.flat[idx] = s_ref / yq

    n_out = int(np.floor(scene.outlier_fraction * idx.size))
    if n_out > 0:
        chosen = np.sort(rng.choice(idx, size=n_out, replace=False))
        zmin = float(depth.flat[idx].min())
        zmax = float(depth.flat[idx].max())
        if zmax == zmin:
            zmax = zmin * 1.5
        noisy.flat[chosen] = rng.uniform(zmin, zmax, size=n_out)
        labels.flat[chosen] = 0

    for i, plane in enumerate(scene.planes):
        nu, nv, nq = plane.normal
        # with y = s q the q-coefficient shrinks by s; renormalise both sides
        raw = np.array([nu, nv, nq / s_ref])
        planes[i + 1] = (plane.scaled_normal(s_ref), plane.offset / np.linalg.norm(raw))
    return DepthImage.from_array(noisy), Segmentation(labels=labels, planes=planes)


def box_corner_scene(width: int, height: int, noise_sigma=0.0, outlier_fraction=0.0,
                     depth=2.0, tilt=0.35) -> SyntheticScene:
    """Three planes meeting around the image centre, like the inside of a box.

    The image is split into left, right and bottom regions; each carries a
    plane with a distinct orientation in inverse-depth space.
    """
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    w1, h1 = width - 0.5, height - 0.5
    left = [(-0.5, -0.5), (cx, -0.5), (cx, cy), (-0.5, h1 * 0.75)]
    right = [(cx, -0.5), (w1, -0.5), (w1, h1 * 0.75), (cx, cy)]
    bottom = [(-0.5, h1 * 0.75), (cx, cy), (w1, h1 * 0.75), (w1, h1), (-0.5, h1)]
    q0 = 1.0 / depth
    g = tilt * q0 / max(width, height)
    return SyntheticScene(
        planes=(
            ScenePlane.from_gradient(g, 0.0, q0, left),
            ScenePlane.from_gradient(-g, 0.0, q0 + 2 * g * cx, right),
            ScenePlane.from_gradient(0.3 * g, -1.2 * g, q0 + 1.2 * g * cy * 1.5, bottom),
        ),
        noise_sigma=noise_sigma,
        outlier_fraction=outlier_fraction,
    )


def random_scene(rng, width: int, height: int, noise_sigma=0.5, outlier_fraction=0.0,
                 max_strips=3) -> SyntheticScene:
    """Random rectangular tiling of the image with one plane per tile.

    The image is cut into 1..max_strips vertical strips, each optionally
    split once horizontally. Tiles get random inverse-depth gradients with
    depths kept in roughly [1, 3].
    """
    n_strips = int(rng.integers(1, max_strips + 1))
    cuts = np.sort(rng.choice(np.arange(width // 5, width - width // 5),
                              size=n_strips - 1, replace=False)) if n_strips > 1 else []
    xs = [-0.5, *[c - 0.5 for c in cuts], width - 0.5]
    planes = []
    for x0, x1 in zip(xs[:-1], xs[1:]):
        ys = [-0.5, height - 0.5]
        if rng.random() < 0.5:
            cut = int(rng.integers(height // 4, height - height // 4))
            ys = [-0.5, cut - 0.5, height - 0.5]
        for y0, y1 in zip(ys[:-1], ys[1:]):
            q0 = rng.uniform(0.4, 0.9)
            span = 0.25 * q0
            du = rng.uniform(-1, 1) * span / width
            dv = rng.uniform(-1, 1) * span / height
            poly = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
            planes.append(ScenePlane.from_gradient(du, dv, q0 - du * (x0 + x1) / 2
                                                   - dv * (y0 + y1) / 2, poly))
    return SyntheticScene(planes=planes, noise_sigma=noise_sigma,
                          outlier_fraction=outlier_fraction)
