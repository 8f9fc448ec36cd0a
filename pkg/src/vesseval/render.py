"""Deterministic raster overlays of scene annotations.

Vessels are outlined and lightly tinted, materials and parts are filled,
and a legend lists every instance.  Colors hash from instance ids, so the
same scene always renders to identical image bytes.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .annotations import SceneAnnotation
from .taxonomy import KIND_VESSEL

__all__ = ["instance_color", "render_overlay"]

_BACKGROUND = 245
_LEGEND_ROW = 14
_OUTLINE_PX = 2


def instance_color(instance_id: str) -> tuple[int, int, int]:
    """Stable, reasonably saturated color derived from the instance id."""
    digest = hashlib.sha256(instance_id.encode("utf-8")).digest()
    # keep channels off the extremes so tints stay visible on the background
    return tuple(64 + (b % 160) for b in digest[:3])


def _shift(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(mask)
    h, w = mask.shape
    out[max(dy, 0):h + min(dy, 0), max(dx, 0):w + min(dx, 0)] = \
        mask[max(-dy, 0):h + min(-dy, 0), max(-dx, 0):w + min(-dx, 0)]
    return out


def _erode(mask: np.ndarray) -> np.ndarray:
    return (
        mask
        & _shift(mask, 1, 0) & _shift(mask, -1, 0)
        & _shift(mask, 0, 1) & _shift(mask, 0, -1)
    )


def _boundary(mask: np.ndarray, thickness: int) -> np.ndarray:
    eroded = mask
    for _ in range(thickness):
        eroded = _erode(eroded)
    return mask & ~eroded


def render_overlay(scene: SceneAnnotation, out_path) -> None:
    """Write a PNG with tinted instance regions and a class legend."""
    width, height = scene.image_width, scene.image_height
    canvas = np.full((height, width, 3), _BACKGROUND, dtype=np.float64)

    # draw vessels first so contents stay visible on top
    ordering = sorted(scene.instances, key=lambda i: (i.kind != KIND_VESSEL, i.id))
    for inst in ordering:
        mask = inst.mask.to_array()
        color = np.array(instance_color(inst.id), dtype=np.float64)
        if inst.kind == KIND_VESSEL:
            canvas[mask] = 0.85 * canvas[mask] + 0.15 * color
            outline = _boundary(mask, _OUTLINE_PX)
            canvas[outline] = color
        else:
            canvas[mask] = 0.45 * canvas[mask] + 0.55 * color

    legend_height = _LEGEND_ROW * len(scene.instances) + 6 if scene.instances else 0
    image = Image.new("RGB", (width, height + legend_height), (255, 255, 255))
    image.paste(Image.fromarray(np.clip(canvas, 0, 255).astype(np.uint8)), (0, 0))

    if scene.instances:
        draw = ImageDraw.Draw(image)
        font = ImageFont.load_default()
        for row, inst in enumerate(sorted(scene.instances, key=lambda i: i.id)):
            y = height + 3 + row * _LEGEND_ROW
            draw.rectangle([2, y + 2, 12, y + 12], fill=instance_color(inst.id))
            label = f"{inst.id} ({inst.kind}): {', '.join(sorted(inst.classes))}"
            if inst.properties:
                label += f" [{', '.join(sorted(inst.properties))}]"
            draw.text((16, y), label, fill=(20, 20, 20), font=font)

    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    image.save(out_path, format="PNG")
