"""Orthographic four-view capture of scene subsets.

Each montage is a 2x2 grid: front view top-left, side view top-right,
top-down view bottom-left, oblique view bottom-right. All four cameras are
orthographic; the oblique camera sits at azimuth 45 deg / elevation 35 deg
looking at the framed center. The front camera views along -y, the side
camera along -x (viewing from +x), the top camera along -z.

Rendering is deterministic flat shading: one fixed color per node id on a
white background with a z-buffer, so identical inputs produce byte-identical
images suitable for golden tests.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import RenderError
from .geometry import OrientedBox, world_box
from .graph import SceneGraph

WHITE = 255

# Box corner indices (see OrientedBox.corners) forming the 12 faces triangles.
_BOX_TRIANGLES = (
    (0, 1, 2), (0, 2, 3),  # bottom
    (4, 6, 5), (4, 7, 6),  # top
    (0, 4, 5), (0, 5, 1),  # -y side
    (2, 6, 7), (2, 7, 3),  # +y side
    (1, 5, 6), (1, 6, 2),  # +x side
    (0, 3, 7), (0, 7, 4),  # -x side
)


def _unit(v: tuple[float, float, float]) -> tuple[float, float, float]:
    n = math.sqrt(sum(c * c for c in v))
    return (v[0] / n, v[1] / n, v[2] / n)


def _oblique_axes(azimuth_deg: float, elevation_deg: float):
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    # Camera sits on the (azimuth, elevation) ray and looks back at the center.
    forward = _unit((-math.cos(el) * math.cos(az), -math.cos(el) * math.sin(az), -math.sin(el)))
    right = _unit((forward[1], -forward[0], 0.0))
    up = (
        right[1] * forward[2] - right[2] * forward[1],
        right[2] * forward[0] - right[0] * forward[2],
        right[0] * forward[1] - right[1] * forward[0],
    )
    return right, _unit(up), forward


@dataclass(frozen=True)
class CameraView:
    """One orthographic camera: screen basis plus a fitted square viewport."""

    name: str
    right: tuple[float, float, float]
    up: tuple[float, float, float]
    forward: tuple[float, float, float]
    center: tuple[float, float] = (0.0, 0.0)  # viewport center in screen coords
    half_side: float = 1.0

    def screen_xy(self, point) -> tuple[float, float]:
        px, py, pz = float(point[0]), float(point[1]), float(point[2])
        sx = px * self.right[0] + py * self.right[1] + pz * self.right[2]
        sy = px * self.up[0] + py * self.up[1] + pz * self.up[2]
        return sx, sy


@dataclass(frozen=True)
class CameraRig:
    """The four canonical cameras plus framing parameters."""

    margin: float = 0.10
    quad_size: int = 256
    oblique_azimuth: float = 45.0
    oblique_elevation: float = 35.0
    framed: bool = False
    views: tuple[CameraView, ...] = ()

    def __post_init__(self):
        if self.margin < 0.0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.quad_size < 64:
            raise ValueError(f"quad_size must be >= 64, got {self.quad_size}")
        if not self.views:
            right, up, forward = _oblique_axes(self.oblique_azimuth, self.oblique_elevation)
            object.__setattr__(
                self,
                "views",
                (
                    CameraView("front", (1, 0, 0), (0, 0, 1), (0, -1, 0)),
                    CameraView("side", (0, -1, 0), (0, 0, 1), (-1, 0, 0)),
                    CameraView("top", (1, 0, 0), (0, 1, 0), (0, 0, -1)),
                    CameraView("oblique", right, up, forward),
                ),
            )


def frame_cameras(boxes: list[OrientedBox], rig: CameraRig) -> CameraRig:
    """Fit every camera's square viewport around the union of the boxes.

    The union axis-aligned bounding volume's corners are projected per view;
    the viewport side is the larger projected extent times (1 + 2 * margin).
    Deterministic and idempotent for the same boxes.
    """
    if not boxes:
        raise RenderError("cannot frame cameras over an empty box list")
    corners = np.concatenate([box.corners() for box in boxes])
    los = corners.min(axis=0)
    his = corners.max(axis=0)
    bound_corners = np.array([
        [x, y, z]
        for x in (los[0], his[0])
        for y in (los[1], his[1])
        for z in (los[2], his[2])
    ])
    fitted = []
    for view in rig.views:
        xs, ys = [], []
        for corner in bound_corners:
            sx, sy = view.screen_xy(corner)
            xs.append(sx)
            ys.append(sy)
        cx = (min(xs) + max(xs)) / 2.0
        cy = (min(ys) + max(ys)) / 2.0
        extent = max(max(xs) - min(xs), max(ys) - min(ys), 1e-6)
        half_side = extent * (1.0 + 2.0 * rig.margin) / 2.0
        fitted.append(replace(view, center=(cx, cy), half_side=half_side))
    return replace(rig, views=tuple(fitted), framed=True)


def node_color(node_id: str) -> tuple[int, int, int]:
    """Deterministic per-id color, never white."""
    digest = hashlib.md5(node_id.encode("utf-8")).digest()
    return tuple(32 + b % 192 for b in digest[:3])


@dataclass(frozen=True)
class ViewMontage:
    """2x2 RGB montage with the rig that produced it.

    pixels holds row-major 8-bit RGB bytes of the full montage
    (2*quad_size square).
    """

    width: int
    height: int
    pixels: bytes
    subject: str
    camera: CameraRig

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    def quadrant(self, name: str) -> np.ndarray:
        order = {"front": (0, 0), "side": (0, 1), "top": (1, 0), "oblique": (1, 1)}
        row, col = order[name]
        q = self.height // 2
        return self.as_array()[row * q:(row + 1) * q, col * q:(col + 1) * q]

    def to_ppm(self) -> bytes:
        return b"P6\n%d %d\n255\n" % (self.width, self.height) + self.pixels

    def to_png(self) -> bytes:
        from PIL import Image

        image = Image.fromarray(self.as_array(), mode="RGB")
        buffer = io.BytesIO()
        image.save(buffer, format="PNG")
        return buffer.getvalue()


def _rasterize_quad(view: CameraView, boxes: list[tuple[OrientedBox, tuple[int, int, int]]],
                    size: int) -> np.ndarray:
    image = np.full((size, size, 3), WHITE, dtype=np.uint8)
    depth = np.full((size, size), np.inf)
    scale = size / (2.0 * view.half_side)
    for box, color in boxes:
        corners = box.corners()
        screen = np.empty((8, 3))
        for i, corner in enumerate(corners):
            sx, sy = view.screen_xy(corner)
            # Pixel coords: x right, y down; depth grows away from the camera.
            screen[i, 0] = (sx - view.center[0] + view.half_side) * scale
            screen[i, 1] = (view.center[1] + view.half_side - sy) * scale
            screen[i, 2] = (corner[0] * view.forward[0] + corner[1] * view.forward[1]
                            + corner[2] * view.forward[2])
        for tri in _BOX_TRIANGLES:
            _fill_triangle(image, depth, screen[list(tri)], color)
    return image


def _fill_triangle(image: np.ndarray, depth: np.ndarray, verts: np.ndarray,
                   color: tuple[int, int, int]) -> None:
    size = image.shape[0]
    (x0, y0, z0), (x1, y1, z1), (x2, y2, z2) = verts
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if abs(area) < 1e-12:
        return
    min_x = max(int(math.floor(min(x0, x1, x2))), 0)
    max_x = min(int(math.ceil(max(x0, x1, x2))), size - 1)
    min_y = max(int(math.floor(min(y0, y1, y2))), 0)
    max_y = min(int(math.ceil(max(y0, y1, y2))), size - 1)
    if min_x > max_x or min_y > max_y:
        return
    xs = np.arange(min_x, max_x + 1) + 0.5
    ys = np.arange(min_y, max_y + 1) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    w0 = ((x1 - x0) * (gy - y0) - (gx - x0) * (y1 - y0)) / area
    w1 = ((gx - x0) * (y2 - y0) - (x2 - x0) * (gy - y0)) / area
    # Barycentric coords relative to vertex 0: point = v0 + w1*(v1-v0) + w0*(v2-v0)
    inside = (w0 >= 0.0) & (w1 >= 0.0) & (w0 + w1 <= 1.0)
    if not inside.any():
        return
    z = z0 + w1 * (z1 - z0) + w0 * (z2 - z0)
    window_depth = depth[min_y:max_y + 1, min_x:max_x + 1]
    closer = inside & (z < window_depth)
    window_depth[closer] = z[closer]
    window_image = image[min_y:max_y + 1, min_x:max_x + 1]
    window_image[closer] = np.asarray(color, dtype=np.uint8)


def render_montage(graph: SceneGraph, subject_ids, all_ids, rig: CameraRig,
                   subject_tag: str = "X1") -> ViewMontage:
    """Render the subject nodes under a rig framed over all_ids.

    Non-subject nodes are not drawn; they only participate through the shared
    framing so the X1/X2/Xall montages of one step line up pixel for pixel.
    """
    subject_ids = list(subject_ids)
    all_ids = list(all_ids)
    for node_id in set(subject_ids) | set(all_ids):
        graph.node(node_id)
    frame_boxes = [world_box(graph.node(i)) for i in all_ids]
    if not frame_boxes:
        raise RenderError("cannot render with an empty framing set")
    framed = frame_cameras(frame_boxes, rig) if not rig.framed else rig
    drawn = [(world_box(graph.node(i)), node_color(i)) for i in subject_ids]
    size = framed.quad_size
    quads = [_rasterize_quad(view, drawn, size) for view in framed.views]
    top = np.concatenate([quads[0], quads[1]], axis=1)
    bottom = np.concatenate([quads[2], quads[3]], axis=1)
    pixels = np.concatenate([top, bottom], axis=0)
    return ViewMontage(width=2 * size, height=2 * size, pixels=pixels.tobytes(),
                       subject=subject_tag, camera=framed)


def capture_triplet(graph: SceneGraph, x1_ids, x2_ids,
                    rig: CameraRig | None = None) -> tuple[ViewMontage, ViewMontage, ViewMontage]:
    """The X1 / X2 / Xall montages of one optimization step, under one framing."""
    x1 = list(x1_ids)
    x2 = list(x2_ids)
    if not x1 or not x2:
        raise RenderError("X1 and X2 must both be non-empty")
    overlap = set(x1) & set(x2)
    if overlap:
        raise RenderError(f"X1 and X2 overlap: {sorted(overlap)}")
    rig = rig or CameraRig()
    all_ids = x1 + x2
    framed = frame_cameras([world_box(graph.node(i)) for i in all_ids], rig)
    return (
        render_montage(graph, x1, all_ids, framed, subject_tag="X1"),
        render_montage(graph, x2, all_ids, framed, subject_tag="X2"),
        render_montage(graph, all_ids, all_ids, framed, subject_tag="Xall"),
    )


class MontageCapturer:
    """Default capturer used by the optimizer when a scorer consumes views."""

    def __init__(self, rig: CameraRig | None = None):
        self.rig = rig or CameraRig()

    def __call__(self, graph: SceneGraph, x1_ids, x2_ids):
        return capture_triplet(graph, x1_ids, x2_ids, self.rig)
