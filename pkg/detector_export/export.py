#!/usr/bin/env python3
"""Run a facial-component detector over HR images and emit detections JSONL.

One line per image: {"image_id", "detections": [{"label", "confidence",
"bbox": [x1,y1,x2,y2]}]}; boxes are integer pixels in the 128x128 frame,
half-open, labels normalized to the nine-class vocabulary. Images that fail
to load are skipped with a warning and make the final exit status nonzero;
images with no hits still emit a record with an empty list.

Usage:
    python export.py --images DIR --out FILE [--conf 0.05]
                     [--prompts-file prompts.json]
                     [--backend synthetic|yolo-world] [--weights FILE]
                     [--seed 0]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from PIL import Image

from backends import FRAME, SyntheticBackend, YoloWorldBackend

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def load_prompts(path: Path) -> tuple[list[str], dict[str, str], float]:
    """Returns (prompt texts, text->canonical-label map, default threshold)."""
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    texts, text_to_label = [], {}
    for entry in spec["prompts"]:
        label = entry["label"]
        for text in [entry["text"], label, *entry.get("synonyms", [])]:
            text_to_label[text.lower()] = label
        texts.append(entry["text"])
    return texts, text_to_label, float(spec.get("confidence_threshold", 0.05))


def normalize_hit(text, conf, xyxy, text_to_label, threshold):
    """Map a raw hit onto the schema; None when filtered out."""
    label = text_to_label.get(text.lower())
    if label is None or conf < threshold:
        return None
    x1 = max(0, min(FRAME - 1, int(round(xyxy[0]))))
    y1 = max(0, min(FRAME - 1, int(round(xyxy[1]))))
    x2 = max(x1 + 1, min(FRAME, int(round(xyxy[2]))))
    y2 = max(y1 + 1, min(FRAME, int(round(xyxy[3]))))
    return {"label": label, "confidence": round(min(max(conf, 0.0), 1.0), 6),
            "bbox": [x1, y1, x2, y2]}


def export(images_dir: Path, out_path: Path, backend, prompt_texts,
           text_to_label, threshold) -> int:
    paths = sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    skipped = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for path in paths:
            try:
                with Image.open(path) as im:
                    im.convert("RGB")
            except Exception as exc:
                print(f"warning: skipping unreadable image {path}: {exc}", file=sys.stderr)
                skipped += 1
                continue
            detections = []
            for text, conf, xyxy in backend.detect(path, prompt_texts):
                normalized = normalize_hit(text, conf, xyxy, text_to_label, threshold)
                if normalized is not None:
                    detections.append(normalized)
            detections.sort(key=lambda d: (d["label"], d["bbox"]))
            fh.write(json.dumps({"image_id": path.stem, "detections": detections}) + "\n")
    return skipped


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--images", required=True, help="directory of 128x128 HR images")
    parser.add_argument("--out", required=True, help="output detections JSONL")
    parser.add_argument("--conf", type=float, default=None,
                        help="confidence threshold (default: prompts file value)")
    parser.add_argument("--prompts-file", default=str(Path(__file__).parent / "prompts.json"))
    parser.add_argument("--backend", choices=("synthetic", "yolo-world"), default="yolo-world")
    parser.add_argument("--weights", help="YOLO-World weights file")
    parser.add_argument("--seed", type=int, default=0, help="synthetic backend seed")
    args = parser.parse_args(argv)

    images_dir = Path(args.images)
    if not images_dir.is_dir():
        print(f"error: image directory {images_dir} does not exist", file=sys.stderr)
        return 2
    prompt_texts, text_to_label, default_threshold = load_prompts(Path(args.prompts_file))
    threshold = default_threshold if args.conf is None else args.conf

    if args.backend == "synthetic":
        backend = SyntheticBackend(seed=args.seed)
    else:
        if not args.weights:
            print("error: --backend yolo-world needs --weights", file=sys.stderr)
            return 2
        backend = YoloWorldBackend(args.weights)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    skipped = export(images_dir, out_path, backend, prompt_texts, text_to_label, threshold)
    if skipped:
        print(f"error: {skipped} image(s) skipped", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
