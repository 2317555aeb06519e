"""Procedural face images with geometry-accurate detection boxes.

Stands in for an aligned face dataset plus detector output at desk scale:
every drawn component (eyes, brows, nose, mouth, ...) reports the box it was
actually drawn in, so heatmaps built from these records are pixel-aligned
with real structure. Rendering is pure numpy (ellipse masks plus a light
blur), deterministic per (seed, index).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import save_image
from .detections import FRAME_SIZE, DetectionRecord, save_detections
from .heatmap import gaussian_blur

SIZE = FRAME_SIZE


def _ellipse(yy, xx, cx, cy, rx, ry):
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def _box(cx, cy, rx, ry, margin=2):
    x1 = int(np.clip(np.floor(cx - rx - margin), 0, SIZE - 2))
    y1 = int(np.clip(np.floor(cy - ry - margin), 0, SIZE - 2))
    x2 = int(np.clip(np.ceil(cx + rx + margin), x1 + 2, SIZE))
    y2 = int(np.clip(np.ceil(cy + ry + margin), y1 + 2, SIZE))
    return (x1, y1, x2, y2)


def sample_face(rng: np.random.Generator) -> tuple[np.ndarray, dict[str, list[tuple]]]:
    """One rendered face: (HxWx3 float image in [0,1], {label: [bbox, ...]})."""
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    img = np.zeros((SIZE, SIZE, 3))

    # background: vertical two-color gradient
    top = rng.uniform(0.15, 0.55, size=3)
    bottom = rng.uniform(0.15, 0.55, size=3)
    t = (yy / (SIZE - 1))[..., None]
    img[:] = top * (1 - t) + bottom * t

    cx = 64 + rng.uniform(-5, 5)
    cy = 66 + rng.uniform(-4, 4)
    rx = rng.uniform(34, 42)
    ry = rng.uniform(44, 52)
    skin = np.array([rng.uniform(0.70, 0.92), rng.uniform(0.55, 0.75), rng.uniform(0.45, 0.62)])
    hair = np.array([rng.uniform(0.05, 0.35)] * 3) * rng.uniform(0.6, 1.4, size=3)
    hair = np.clip(hair, 0.02, 0.5)

    # head = face ellipse plus hair cap above
    head_mask = _ellipse(yy, xx, cx, cy - 6, rx + 4, ry + 8)
    img[head_mask] = hair
    face_mask = _ellipse(yy, xx, cx, cy, rx, ry)
    img[face_mask] = skin

    boxes: dict[str, list[tuple]] = {k: [] for k in (
        "eyes", "eyebrows", "mouth", "nose", "nose_tip", "chin", "ears", "face", "head")}
    boxes["face"].append(_box(cx, cy, rx, ry))
    boxes["head"].append(_box(cx, cy - 6, rx + 4, ry + 8))

    # ears
    ear_ry = rng.uniform(5, 7)
    ear_y = cy - rng.uniform(2, 8)
    ear_color = skin * rng.uniform(0.85, 0.95)
    for side in (-1, 1):
        ex = cx + side * rx
        mask = _ellipse(yy, xx, ex, ear_y, 5, ear_ry)
        img[mask] = ear_color
        boxes["ears"].append(_box(ex, ear_y, 5, ear_ry))

    # eyes: sclera + iris + pupil
    eye_dx = rng.uniform(14, 19)
    eye_y = cy - rng.uniform(10, 16)
    eye_rx = rng.uniform(5.5, 7.5)
    eye_ry = eye_rx * rng.uniform(0.5, 0.65)
    iris = rng.uniform(0.05, 0.5, size=3)
    for side in (-1, 1):
        ex = cx + side * eye_dx
        img[_ellipse(yy, xx, ex, eye_y, eye_rx, eye_ry)] = (0.93, 0.93, 0.9)
        img[_ellipse(yy, xx, ex, eye_y, eye_ry * 0.8, eye_ry * 0.8)] = iris
        img[_ellipse(yy, xx, ex, eye_y, eye_ry * 0.35, eye_ry * 0.35)] = (0.02, 0.02, 0.02)
        boxes["eyes"].append(_box(ex, eye_y, eye_rx, eye_ry))

    # eyebrows: dark bars above the eyes
    brow_dy = rng.uniform(5, 8)
    brow_h = rng.uniform(1.2, 2.2)
    for side in (-1, 1):
        ex = cx + side * eye_dx
        mask = (np.abs(xx - ex) <= eye_rx + 1) & (np.abs(yy - (eye_y - brow_dy)) <= brow_h)
        img[mask] = hair * 0.8
        boxes["eyebrows"].append(_box(ex, eye_y - brow_dy, eye_rx + 1, brow_h + 1))

    # nose: vertical ridge ending in a tip blob
    nose_len = rng.uniform(12, 18)
    nose_top = eye_y + 3
    nose_w = rng.uniform(1.2, 2.0)
    mask = (np.abs(xx - cx) <= nose_w) & (yy >= nose_top) & (yy <= nose_top + nose_len)
    img[mask] = skin * 0.82
    tip_r = rng.uniform(2.5, 3.5)
    img[_ellipse(yy, xx, cx, nose_top + nose_len, tip_r, tip_r * 0.8)] = skin * 0.7
    boxes["nose"].append(_box(cx, nose_top + nose_len / 2, nose_w + 2, nose_len / 2 + 2))
    boxes["nose_tip"].append(_box(cx, nose_top + nose_len, tip_r, tip_r))

    # mouth
    mouth_y = nose_top + nose_len + rng.uniform(7, 10)
    mouth_rx = rng.uniform(8, 13)
    mouth_ry = rng.uniform(2, 3.5)
    lip = np.array([rng.uniform(0.55, 0.8), rng.uniform(0.15, 0.3), rng.uniform(0.2, 0.35)])
    img[_ellipse(yy, xx, cx, mouth_y, mouth_rx, mouth_ry)] = lip
    img[(np.abs(xx - cx) <= mouth_rx * 0.9) & (np.abs(yy - mouth_y) <= 0.6)] = lip * 0.6
    boxes["mouth"].append(_box(cx, mouth_y, mouth_rx, mouth_ry))

    # chin: lower arc of the face ellipse
    boxes["chin"].append(_box(cx, cy + ry * 0.85, rx * 0.45, ry * 0.15))

    # light blur as antialiasing
    for c in range(3):
        img[..., c] = gaussian_blur(img[..., c], 5, 0.8)
    return np.clip(img, 0.0, 1.0), boxes


def detections_for(image_id: str, boxes: dict[str, list[tuple]], rng: np.random.Generator) -> list[DetectionRecord]:
    records = []
    for label in sorted(boxes):
        for bbox in boxes[label]:
            records.append(
                DetectionRecord(
                    image_id=image_id,
                    label=label,
                    confidence=float(rng.uniform(0.5, 0.98)),
                    bbox=bbox,
                )
            )
    return records


def write_synthetic_dataset(root: str | Path, count: int, seed: int = 0) -> list[str]:
    """Render `count` faces under {root}/hr plus {root}/detections.jsonl."""
    root = Path(root)
    (root / "hr").mkdir(parents=True, exist_ok=True)
    per_image: dict[str, list[DetectionRecord]] = {}
    ids = []
    for k in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, k])))
        image_id = f"face_{k:05d}"
        img, boxes = sample_face(rng)
        save_image(root / "hr" / f"{image_id}.png", img.transpose(2, 0, 1) * 2.0 - 1.0)
        per_image[image_id] = detections_for(image_id, boxes, rng)
        ids.append(image_id)
    save_detections(root / "detections.jsonl", per_image)
    return ids
