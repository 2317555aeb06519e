"""Detection backends for the exporter.

Both produce raw hits as (class_text, confidence, (x1, y1, x2, y2) floats);
export.py owns label normalization, clipping and serialization. The
YOLO-World backend wraps ultralytics lazily so the synthetic path needs no
detector install at all.
"""

from __future__ import annotations

import hashlib

import numpy as np

FRAME = 128


class SyntheticBackend:
    """Seeded random-but-plausible face-layout boxes, one set per image.

    Never looks at pixel content; box positions follow a canonical aligned
    face layout with jitter, deterministic in (seed, image name).
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def detect(self, image_path, prompt_texts):
        digest = hashlib.sha256(f"{self.seed}:{image_path.name}".encode()).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))

        def jbox(cx, cy, half_w, half_h, jitter=3.0):
            dx, dy = rng.uniform(-jitter, jitter, 2)
            x1 = int(np.clip(cx + dx - half_w, 0, FRAME - 2))
            y1 = int(np.clip(cy + dy - half_h, 0, FRAME - 2))
            x2 = int(np.clip(cx + dx + half_w, x1 + 2, FRAME))
            y2 = int(np.clip(cy + dy + half_h, y1 + 2, FRAME))
            return (x1, y1, x2, y2)

        layout = {
            "face": [jbox(64, 66, 40, 50)],
            "head": [jbox(64, 60, 46, 58)],
            "eyes": [jbox(47, 52, 9, 6), jbox(81, 52, 9, 6)],
            "eyebrows": [jbox(47, 44, 10, 4), jbox(81, 44, 10, 4)],
            "nose": [jbox(64, 66, 6, 12)],
            "nose_tip": [jbox(64, 76, 4, 4)],
            "mouth": [jbox(64, 92, 13, 6)],
            "chin": [jbox(64, 110, 16, 8)],
            "ears": [jbox(24, 62, 6, 9), jbox(104, 62, 6, 9)],
        }
        hits = []
        for text in prompt_texts:
            for box in layout.get(text.replace(" ", "_"), layout.get(text, [])):
                hits.append((text, float(rng.uniform(0.3, 0.98)), tuple(float(v) for v in box)))
        return hits


class YoloWorldBackend:
    """Open-vocabulary detector driven by the prompt texts.

    Requires the `ultralytics` package and a YOLO-World weights file; both
    are external to this repo (the exporter runs offline, once per dataset).
    """

    def __init__(self, weights: str):
        try:
            from ultralytics import YOLOWorld
        except ImportError as exc:
            raise RuntimeError(
                "the yolo-world backend needs the 'ultralytics' package "
                "(pip install ultralytics) and a weights file"
            ) from exc
        self.model = YOLOWorld(weights)
        self._classes_set = False

    def detect(self, image_path, prompt_texts):
        if not self._classes_set:
            self.model.set_classes(list(prompt_texts))
            self._classes_set = True
        results = self.model.predict(str(image_path), verbose=False)
        hits = []
        for result in results:
            names = result.names
            for box in result.boxes:
                text = names[int(box.cls)]
                conf = float(box.conf)
                x1, y1, x2, y2 = (float(v) for v in box.xyxy[0])
                hits.append((text, conf, (x1, y1, x2, y2)))
        return hits
