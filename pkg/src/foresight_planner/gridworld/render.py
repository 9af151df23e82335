"""Rasterize scenes into camera images and parse head images back into cells.

Each grid cell becomes a PxP block. The four corner pixels always show the
floor: background, or the region's dim fill (closed drawers use a brighter
fill than open ones). An object paints the rest of the block in its bright
color with the shape glyph darkened inside the inner (P-2)x(P-2) area. The
gripper paints the border ring minus corners: white when empty, light gray
when holding, in which case the held object occupies the inner area.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import HEAD_CAMERA, WRIST_CAMERA, Image
from .scene import COLORS, Cell, Scene

DEFAULT_CELL_PIXELS = 4
WRIST_SPAN = 5

BACKGROUND = (24, 24, 24)
PADDING = (0, 0, 0)
GRIPPER = (255, 255, 255)
GRIPPER_HOLDING = (200, 200, 200)

PALETTE = np.array(
    [
        (230, 40, 40),    # red
        (40, 200, 60),    # green
        (50, 90, 230),    # blue
        (240, 220, 40),   # yellow
        (170, 60, 210),   # purple
        (250, 140, 20),   # orange
        (40, 215, 215),   # cyan
        (160, 160, 160),  # gray
    ],
    dtype=np.int64,
)
assert len(PALETTE) == len(COLORS)

BRIGHT = PALETTE.astype(np.uint8)
GLYPH = (PALETTE // 2).astype(np.uint8)
DIM = (PALETTE * 2 // 5).astype(np.uint8)
CLOSED = (PALETTE * 3 // 5).astype(np.uint8)


class RenderError(ValueError):
    pass


def glyph_mask(shape_id: int, cell_pixels: int) -> np.ndarray:
    """Boolean PxP mask of the darkened glyph pixels for ``shape_id``."""
    inner = cell_pixels - 2
    mask = np.zeros((cell_pixels, cell_pixels), dtype=bool)
    q = np.arange(inner * inner).reshape(inner, inner)
    mask[1:-1, 1:-1] = (q % 4) == shape_id
    return mask


def _ring_masks(p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    border = np.zeros((p, p), dtype=bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    corners = np.zeros((p, p), dtype=bool)
    corners[0, 0] = corners[0, -1] = corners[-1, 0] = corners[-1, -1] = True
    inner = ~border
    return border & ~corners, corners, inner


def _paint_object(block: np.ndarray, color: int, shape: int, p: int, inner_only: bool) -> None:
    edges, _, inner = _ring_masks(p)
    obj = np.empty_like(block)
    obj[:] = BRIGHT[color]
    obj[glyph_mask(shape, p)] = GLYPH[color]
    mask = inner if inner_only else (inner | edges)
    block[mask] = obj[mask]


def _render_cells(scene: Scene, p: int) -> np.ndarray:
    img = np.empty((scene.height * p, scene.width * p, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    for r in scene.regions:
        fill = CLOSED[r.color] if r.closed else DIM[r.color]
        for x, y in r.cells:
            img[y * p:(y + 1) * p, x * p:(x + 1) * p] = fill
    for o in scene.objects:
        if o.cell is None:
            continue
        x, y = o.cell
        _paint_object(img[y * p:(y + 1) * p, x * p:(x + 1) * p], o.color, o.shape, p, inner_only=False)
    gx, gy = scene.gripper
    block = img[gy * p:(gy + 1) * p, gx * p:(gx + 1) * p]
    edges, _, _ = _ring_masks(p)
    if scene.holding is not None:
        held = scene.object(scene.holding)
        _paint_object(block, held.color, held.shape, p, inner_only=True)
        block[edges] = GRIPPER_HOLDING
    else:
        block[edges] = GRIPPER
    return img


def render(scene: Scene, camera_id: int = HEAD_CAMERA, cell_pixels: int = DEFAULT_CELL_PIXELS) -> Image:
    if cell_pixels < 4:
        raise RenderError("cell_pixels must be at least 4")
    if camera_id == HEAD_CAMERA:
        return Image.from_array(_render_cells(scene, cell_pixels))
    if camera_id == WRIST_CAMERA:
        p = cell_pixels
        half = WRIST_SPAN // 2
        full = _render_cells(scene, p)
        padded = np.empty(((scene.height + 2 * half) * p, (scene.width + 2 * half) * p, 3), dtype=np.uint8)
        padded[:] = PADDING
        padded[half * p:(half + scene.height) * p, half * p:(half + scene.width) * p] = full
        gx, gy = scene.gripper
        crop = padded[gy * p:(gy + WRIST_SPAN) * p, gx * p:(gx + WRIST_SPAN) * p]
        return Image.from_array(crop)
    raise RenderError(f"unknown camera id {camera_id}")


# -- parsing ------------------------------------------------------------------

@dataclass(frozen=True)
class CellView:
    """What a head image reveals about one cell."""

    object: Optional[tuple[int, int]]  # (color, shape) drawn in the cell, held or resting
    region_color: Optional[int]
    region_closed: bool
    gripper: bool
    holding: bool

    @property
    def resting(self) -> Optional[tuple[int, int]]:
        return None if self.holding else self.object


@dataclass(frozen=True)
class HeadView:
    width: int
    height: int
    cells: dict

    def gripper_cell(self) -> Optional[Cell]:
        for c, v in self.cells.items():
            if v.gripper:
                return c
        return None

    def held(self) -> Optional[tuple[int, int]]:
        for v in self.cells.values():
            if v.holding:
                return v.object
        return None

    def resting_objects(self) -> dict:
        """Map cell -> (color, shape) for every visible object on the table."""
        return {c: v.resting for c, v in self.cells.items() if v.resting is not None}

    def region_cells(self, color: int) -> list[Cell]:
        cells = [c for c, v in self.cells.items() if v.region_color == color]
        return sorted(cells, key=lambda c: (c[1], c[0]))


def _match(color: np.ndarray, table: np.ndarray) -> Optional[int]:
    hits = np.nonzero((table == color).all(axis=1))[0]
    return int(hits[0]) if len(hits) else None


def _parse_object(block: np.ndarray, p: int) -> Optional[tuple[int, int]]:
    inner = block[1:-1, 1:-1].reshape(-1, 3)
    for color in range(len(PALETTE)):
        bright = (inner == BRIGHT[color]).all(axis=1)
        dark = (inner == GLYPH[color]).all(axis=1)
        if not (bright | dark).all():
            continue
        for shape in range(4):
            if np.array_equal(dark, glyph_mask(shape, p)[1:-1, 1:-1].reshape(-1)):
                return color, shape
    return None


def parse_head(image: Image, cell_pixels: int = DEFAULT_CELL_PIXELS) -> HeadView:
    """Recover the visible cell contents of a rendered head image."""
    p = cell_pixels
    if image.width % p or image.height % p:
        raise RenderError("image size is not a multiple of the cell size")
    arr = image.to_array()
    edges, _, _ = _ring_masks(p)
    cells = {}
    for y in range(image.height // p):
        for x in range(image.width // p):
            block = arr[y * p:(y + 1) * p, x * p:(x + 1) * p]
            ring = block[edges]
            empty_gripper = bool((ring == GRIPPER).all())
            holding = bool((ring == GRIPPER_HOLDING).all())
            corner = block[0, 0]
            dim = _match(corner, DIM)
            closed = _match(corner, CLOSED)
            cells[(x, y)] = CellView(
                object=_parse_object(block, p),
                region_color=dim if dim is not None else closed,
                region_closed=dim is None and closed is not None,
                gripper=empty_gripper or holding,
                holding=holding,
            )
    return HeadView(image.width // p, image.height // p, cells)
