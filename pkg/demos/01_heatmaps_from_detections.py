"""Build an importance heatmap for one face, step by step.

Renders a synthetic face, runs the edge/fade/weight pipeline for a couple of
detections, composes the normalized map, and writes a side-by-side PNG.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from landmark_sr.detections import DetectionRecord
from landmark_sr.heatmap import (
    HeatmapConfig,
    canny_edges,
    compose_heatmap,
    gaussian_blur,
    region_heatmap,
    rgb_to_gray,
    scharr_magnitude,
)
from landmark_sr.synth import detections_for, sample_face

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

rng = np.random.Generator(np.random.PCG64(12))
image, boxes = sample_face(rng)
detections = detections_for("demo", boxes, rng)
print(f"synthetic face with {len(detections)} detections:")
for det in detections:
    print(f"  {det.label:<9} conf={det.confidence:.2f} bbox={det.bbox}")

cfg = HeatmapConfig()

# the pipeline on one crop: edges -> blur -> fade -> weight
x1, y1, x2, y2 = boxes["mouth"][0]
crop = rgb_to_gray(image[y1:y2, x1:x2])
scharr = scharr_magnitude(crop)
canny = canny_edges(crop, cfg.canny_low, cfg.canny_high)
fused = np.maximum(scharr, canny)
blurred = gaussian_blur(fused, cfg.blur_kernel, cfg.blur_sigma)
print(f"\nmouth crop {crop.shape}: scharr peak {scharr.max():.2f}, "
      f"canny pixels {int(canny.sum())}, blurred peak {blurred.max():.3f}")

mouth_full = region_heatmap(image, detections_for("demo", {"mouth": boxes["mouth"]}, rng)[0], cfg)
print(f"mouth contribution uses weight {cfg.class_weights['mouth']} "
      f"and {cfg.fade_assignment['mouth']}")

heatmap = compose_heatmap(image, detections, cfg)
print(f"composed map: min {heatmap.values.min():.3f}, max {heatmap.values.max():.3f}")

panel = np.concatenate(
    [image, np.repeat(heatmap.values[..., None], 3, axis=2)], axis=1
)
Image.fromarray(np.round(panel * 255).astype(np.uint8)).save(out_dir / "heatmap_demo.png")
print(f"wrote {out_dir / 'heatmap_demo.png'} (face | importance map)")
