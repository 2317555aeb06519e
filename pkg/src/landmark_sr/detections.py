"""Detector-output records and their JSON-lines interchange format.

One JSONL line per image:

    {"image_id": str, "detections": [{"label": str, "confidence": float,
                                      "bbox": [x1, y1, x2, y2]}, ...]}

Boxes are integer pixels in the 128x128 HR frame, half-open. The detector
itself is an external black box; this file format is the entire contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError

FRAME_SIZE = 128

LABELS = (
    "eyes",
    "eyebrows",
    "mouth",
    "nose",
    "nose_tip",
    "chin",
    "ears",
    "face",
    "head",
)


@dataclass(frozen=True)
class DetectionRecord:
    """One detector hit: class label, confidence, HR-frame pixel box."""

    image_id: str
    label: str
    confidence: float
    bbox: tuple[int, int, int, int]  # (x1, y1, x2, y2), half-open

    def __post_init__(self):
        if self.label not in LABELS:
            raise InputError(f"unknown detection label {self.label!r}")
        if not (0.0 <= self.confidence <= 1.0):
            raise InputError(f"confidence {self.confidence} outside [0, 1]")
        x1, y1, x2, y2 = self.bbox
        if not (0 <= x1 < x2 <= FRAME_SIZE and 0 <= y1 < y2 <= FRAME_SIZE):
            raise InputError(f"bbox {self.bbox} violates 0 <= lo < hi <= {FRAME_SIZE}")

    @property
    def area(self) -> int:
        x1, y1, x2, y2 = self.bbox
        return (x2 - x1) * (y2 - y1)


def parse_record_line(line: str) -> tuple[str, list[DetectionRecord]]:
    """Parse one JSONL line into (image_id, detections)."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed detection line: {exc}") from exc
    if not isinstance(obj, dict) or "image_id" not in obj or "detections" not in obj:
        raise InputError("detection record needs 'image_id' and 'detections'")
    image_id = str(obj["image_id"])
    records = []
    for det in obj["detections"]:
        try:
            records.append(
                DetectionRecord(
                    image_id=image_id,
                    label=det["label"],
                    confidence=float(det["confidence"]),
                    bbox=tuple(int(v) for v in det["bbox"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed detection entry {det!r}: {exc}") from exc
    return image_id, records


def load_detections(path: str | Path) -> dict[str, list[DetectionRecord]]:
    """Read a detections JSONL file into {image_id: [records]}.

    Ids appearing with an empty detection list are kept (a valid degenerate
    case producing an all-zero heatmap).
    """
    out: dict[str, list[DetectionRecord]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            image_id, records = parse_record_line(line)
            out.setdefault(image_id, []).extend(records)
            out.setdefault(image_id, [])
    return out


def save_detections(path: str | Path, per_image: dict[str, list[DetectionRecord]]) -> None:
    """Write {image_id: [records]} as JSONL, one image per line, id-sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_id in sorted(per_image):
            dets = [
                {
                    "label": r.label,
                    "confidence": round(float(r.confidence), 6),
                    "bbox": list(r.bbox),
                }
                for r in per_image[image_id]
            ]
            fh.write(json.dumps({"image_id": image_id, "detections": dets}) + "\n")
