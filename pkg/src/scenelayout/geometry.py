"""Oriented-box proxies and the measurements the oracle scorer relies on."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import ObjectNode

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class OrientedBox:
    """Box with yaw about the world z-axis. half_extents are at yaw 0."""

    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        if any(h <= 0.0 for h in self.half_extents):
            raise ValueError(f"half_extents must be positive, got {self.half_extents!r}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "half_extents", tuple(float(v) for v in self.half_extents))

    @property
    def sphere_diameter(self) -> float:
        """Diameter of the bounding sphere centered at the box center."""
        hx, hy, hz = self.half_extents
        return 2.0 * math.sqrt(hx * hx + hy * hy + hz * hz)

    def axis_half_width(self, axis: int) -> float:
        """Half-width of the box projected onto a world axis.

        Yaw rotates the x/y extents; z is unaffected. For a z-rotation the
        extreme corner projections reduce to |cos|*hx + |sin|*hy exactly.
        """
        hx, hy, hz = self.half_extents
        if axis == 2:
            return hz
        c = abs(math.cos(math.radians(self.yaw)))
        s = abs(math.sin(math.radians(self.yaw)))
        if axis == 0:
            return c * hx + s * hy
        return s * hx + c * hy

    def axis_interval(self, axis: int) -> tuple[float, float]:
        half = self.axis_half_width(axis)
        return (self.center[axis] - half, self.center[axis] + half)

    def corners(self) -> np.ndarray:
        """The 8 world-space corners, fixed order (z-low quad then z-high quad)."""
        hx, hy, hz = self.half_extents
        local = np.array(
            [
                [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
                [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
            ]
        )
        rad = math.radians(self.yaw)
        c, s = math.cos(rad), math.sin(rad)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return local @ rot.T + np.asarray(self.center)


@dataclass(frozen=True)
class SizeEstimate:
    """Real-world extent of an object category, with where it came from."""

    width: float
    depth: float
    height: float
    provenance: str = "default"  # llm | config | default

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0.0:
            raise ValueError("size estimate extents must be positive")

    @property
    def extents(self) -> tuple[float, float, float]:
        return (self.width, self.depth, self.height)


DEFAULT_SIZE = SizeEstimate(1.0, 1.0, 1.0, provenance="default")


def world_box(node: ObjectNode) -> OrientedBox:
    """The node's box in world space: scaled base extents at its feature pose."""
    f = node.feature
    w, d, h = node.base_size
    return OrientedBox(
        center=(f.x, f.y, f.z),
        half_extents=(f.s * w / 2.0, f.s * d / 2.0, f.s * h / 2.0),
        yaw=f.r,
    )


def axis_index(axis: int | str) -> int:
    if isinstance(axis, str):
        try:
            return AXES.index(axis.lower())
        except ValueError:
            raise ValueError(f"axis must be one of {AXES}, got {axis!r}") from None
    if axis not in (0, 1, 2):
        raise ValueError(f"axis index must be 0, 1 or 2, got {axis!r}")
    return axis


def signed_gap(a: OrientedBox, b: OrientedBox, axis: int | str) -> float:
    """Distance between the boxes' projected intervals on a world axis.

    Negative values measure the interval overlap depth.
    """
    k = axis_index(axis)
    a_lo, a_hi = a.axis_interval(k)
    b_lo, b_hi = b.axis_interval(k)
    return max(b_lo - a_hi, a_lo - b_hi)


def characteristic_length(a: OrientedBox, b: OrientedBox) -> float:
    """Mean bounding-sphere diameter of the pair; the unit for gaps and steps."""
    return 0.5 * (a.sphere_diameter + b.sphere_diameter)


def group_bounding_box(boxes: list[OrientedBox]) -> OrientedBox:
    """Axis-aligned box enclosing every input box's yaw-projected extent."""
    if not boxes:
        raise ValueError("group_bounding_box needs at least one box")
    los = []
    his = []
    for k in range(3):
        intervals = [box.axis_interval(k) for box in boxes]
        los.append(min(lo for lo, _ in intervals))
        his.append(max(hi for _, hi in intervals))
    center = tuple((lo + hi) / 2.0 for lo, hi in zip(los, his))
    halves = tuple(max((hi - lo) / 2.0, 1e-9) for lo, hi in zip(los, his))
    return OrientedBox(center=center, half_extents=halves, yaw=0.0)


def sample_points(box: OrientedBox, n: int, seed: int = 0) -> np.ndarray:
    """n deterministic pseudo-random points on the box surface, shape (n, 3).

    Faces are picked with area-weighted probability so the density is uniform
    over the surface.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got {n}")
    rng = np.random.default_rng(seed)
    hx, hy, hz = box.half_extents
    # Face areas for +-x, +-y, +-z pairs.
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    probs = areas / areas.sum()
    faces = rng.choice(6, size=n, p=probs)
    u = rng.uniform(-1.0, 1.0, size=n)
    v = rng.uniform(-1.0, 1.0, size=n)
    pts = np.empty((n, 3))
    for face in range(6):
        mask = faces == face
        sign = 1.0 if face % 2 == 0 else -1.0
        if face < 2:
            pts[mask, 0] = sign * hx
            pts[mask, 1] = u[mask] * hy
            pts[mask, 2] = v[mask] * hz
        elif face < 4:
            pts[mask, 0] = u[mask] * hx
            pts[mask, 1] = sign * hy
            pts[mask, 2] = v[mask] * hz
        else:
            pts[mask, 0] = u[mask] * hx
            pts[mask, 1] = v[mask] * hy
            pts[mask, 2] = sign * hz
    rad = math.radians(box.yaw)
    c, s = math.cos(rad), math.sin(rad)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return pts @ rot.T + np.asarray(box.center)
