"""Importance-heatmap construction from detector bounding boxes.

Each detected region is cropped from the HR target, reduced to an edge map
(pixelwise max of a normalized Scharr magnitude and a Canny edge mask),
Gaussian-blurred, renormalized, modulated by a radial fade chosen per class,
scaled by a class weight, and pasted back. All contributions are summed and
the result is divided by its global maximum, giving values in [0, 1].
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .detections import FRAME_SIZE, LABELS, DetectionRecord
from .errors import ConfigError, InputError

# BT.601 luma coefficients for RGB -> gray.
_LUMA = np.array([0.299, 0.587, 0.114])

_SCHARR_X = np.array([[-3, 0, 3], [-10, 0, 10], [-3, 0, 3]], dtype=np.float64)
_SCHARR_Y = _SCHARR_X.T

DEFAULT_CLASS_WEIGHTS = {
    "eyes": 4.5,
    "eyebrows": 4.0,
    "mouth": 4.0,
    "nose": 4.0,
    "chin": 4.0,
    "ears": 4.0,
    "face": 4.0,
    "nose_tip": 3.0,
    "head": 2.0,
}

# Small features get the center-emphasizing fade, larger regions the
# contour-emphasizing one.
DEFAULT_FADE_ASSIGNMENT = {
    "eyes": "center_fade",
    "eyebrows": "center_fade",
    "mouth": "center_fade",
    "nose": "center_fade",
    "nose_tip": "center_fade",
    "chin": "contour_fade",
    "ears": "contour_fade",
    "face": "contour_fade",
    "head": "contour_fade",
}

MIN_BOX_AREA = 4  # boxes below this are skipped with a warning record


@dataclass
class HeatmapConfig:
    blur_kernel: int = 15
    blur_sigma: float = 3.0
    inverse_fade_sigma: float = 0.6
    class_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CLASS_WEIGHTS))
    fade_assignment: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_FADE_ASSIGNMENT))
    canny_low: float = 0.1
    canny_high: float = 0.3

    def __post_init__(self):
        if self.blur_kernel < 3 or self.blur_kernel % 2 == 0:
            raise ConfigError(f"blur_kernel must be odd and >= 3, got {self.blur_kernel}")
        if self.blur_sigma <= 0:
            raise ConfigError("blur_sigma must be > 0")
        if self.inverse_fade_sigma <= 0:
            raise ConfigError("inverse_fade_sigma must be > 0")
        if not (0.0 <= self.canny_low <= self.canny_high):
            raise ConfigError(
                f"need 0 <= canny_low <= canny_high, got {self.canny_low}, {self.canny_high}"
            )
        for label in LABELS:
            if self.class_weights.get(label, 0.0) <= 0:
                raise ConfigError(f"class weight for {label!r} must be > 0")
            if self.fade_assignment.get(label) not in ("center_fade", "contour_fade"):
                raise ConfigError(f"label {label!r} needs a fade assignment")


@dataclass
class ImportanceMap:
    """Normalized per-pixel weight field for one image, values in [0, 1]."""

    image_id: str
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise InputError("importance map must be a 2-D grid")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise InputError("importance map values must lie in [0, 1]")


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an HxWx3 array in [0, 1]."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InputError(f"expected HxWx3 image, got shape {rgb.shape}")
    return rgb @ _LUMA


def _minmax(grid: np.ndarray) -> np.ndarray:
    lo, hi = grid.min(), grid.max()
    if hi - lo <= 0:
        return np.zeros_like(grid)
    return (grid - lo) / (hi - lo)


def _conv2_same(grid: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D correlation with symmetric (reflect) borders, same-size output."""
    r = kernel.shape[0] // 2
    padded = np.pad(grid, r, mode="symmetric")
    windows = np.lib.stride_tricks.sliding_window_view(padded, kernel.shape)
    return np.einsum("ijkl,kl->ij", windows, kernel)


def scharr_magnitude(gray_crop: np.ndarray) -> np.ndarray:
    """Min-max-normalized Scharr gradient magnitude of a [0,1] gray crop."""
    g = np.asarray(gray_crop, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise InputError("scharr_magnitude needs a non-empty 2-D crop")
    gx = _conv2_same(g, _SCHARR_X)
    gy = _conv2_same(g, _SCHARR_Y)
    return _minmax(np.hypot(gx, gy))


def _gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2
    k = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_blur(grid: np.ndarray, kernel: int, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect borders; kernel sums to 1."""
    if kernel % 2 == 0 or kernel < 1:
        raise ConfigError(f"blur kernel must be odd, got {kernel}")
    if sigma <= 0:
        raise ConfigError("blur sigma must be > 0")
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise InputError("gaussian_blur needs a non-empty 2-D grid")
    k = _gaussian_kernel1d(kernel, sigma)
    r = kernel // 2

    def along(a: np.ndarray) -> np.ndarray:
        p = np.pad(a, ((r, r), (0, 0)), mode="symmetric")
        win = np.lib.stride_tricks.sliding_window_view(p, kernel, axis=0)
        return win @ k

    return along(along(g).T).T


def _nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Non-maximum suppression over 4 quantized directions.

    Ties along the gradient direction are broken toward the lower index so a
    clean step edge yields a one-pixel-wide line.
    """
    h, w = mag.shape
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    # neighbor offsets (dy, dx) per direction bucket
    horiz = (angle < 22.5) | (angle >= 157.5)
    diag1 = (angle >= 22.5) & (angle < 67.5)
    vert = (angle >= 67.5) & (angle < 112.5)
    diag2 = (angle >= 112.5) & (angle < 157.5)
    offs = np.zeros((h, w, 2), dtype=np.int64)
    offs[horiz] = (0, 1)
    offs[diag1] = (1, 1)
    offs[vert] = (1, 0)
    offs[diag2] = (1, -1)

    padded = np.pad(mag, 1, mode="constant")
    yy, xx = np.mgrid[0:h, 0:w]
    fwd = padded[yy + 1 + offs[..., 0], xx + 1 + offs[..., 1]]
    bwd = padded[yy + 1 - offs[..., 0], xx + 1 - offs[..., 1]]
    keep = (mag > bwd) & (mag >= fwd)
    return np.where(keep, mag, 0.0)


def canny_edges(gray_crop: np.ndarray, low: float, high: float) -> np.ndarray:
    """Standard Canny pipeline on a [0,1] crop; returns a {0,1} grid.

    Thresholds apply to the max-normalized gradient magnitude. Smoothing uses
    a fixed 5x5 Gaussian (sigma 1.4); hysteresis is 8-connected.
    """
    if low > high:
        raise ConfigError(f"canny thresholds need low <= high, got {low} > {high}")
    if low < 0:
        raise ConfigError("canny thresholds must be >= 0")
    g = np.asarray(gray_crop, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise InputError("canny_edges needs a non-empty 2-D crop")

    smoothed = gaussian_blur(g, 5, 1.4)
    gx = _conv2_same(smoothed, _SCHARR_X)
    gy = _conv2_same(smoothed, _SCHARR_Y)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return np.zeros_like(g)
    mag = mag / peak

    thin = _nms(mag, gx, gy)
    strong = thin >= high
    weak = thin >= low

    # hysteresis: flood from strong pixels through weak ones, 8-connected
    edges = np.zeros_like(g)
    visited = np.zeros(g.shape, dtype=bool)
    queue = deque(zip(*np.nonzero(strong)))
    for y, x in queue:
        visited[y, x] = True
    h, w = g.shape
    while queue:
        y, x = queue.popleft()
        edges[y, x] = 1.0
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and not visited[ny, nx] and weak[ny, nx]:
                    visited[ny, nx] = True
                    queue.append((ny, nx))
    return edges


def _axis_coords(n: int) -> np.ndarray:
    # endpoints inclusive; a 1-pixel axis sits at the center
    if n < 1:
        raise InputError("fade grid sides must be >= 1")
    if n == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, n)


def center_fade(width: int, height: int) -> np.ndarray:
    """exp(-2(x^2+y^2)) on box coordinates normalized to [-1, 1]."""
    x = _axis_coords(width)
    y = _axis_coords(height)
    r2 = y[:, None] ** 2 + x[None, :] ** 2
    return np.exp(-2.0 * r2)


def contour_fade(width: int, height: int, sigma: float) -> np.ndarray:
    """1 - exp(-(x^2+y^2)/(2 sigma^2)) on normalized box coordinates."""
    if sigma <= 0:
        raise ConfigError("contour fade sigma must be > 0")
    x = _axis_coords(width)
    y = _axis_coords(height)
    r2 = y[:, None] ** 2 + x[None, :] ** 2
    return 1.0 - np.exp(-r2 / (2.0 * sigma**2))


def region_heatmap(
    hr_image: np.ndarray,
    det: DetectionRecord,
    cfg: HeatmapConfig,
    warnings: list[str] | None = None,
) -> np.ndarray:
    """One detection's weighted contribution, pasted into a full-size grid.

    Degenerate boxes (area < 4 px) contribute zero and leave a warning record.
    """
    h, w = hr_image.shape[:2]
    full = np.zeros((h, w), dtype=np.float64)
    x1, y1, x2, y2 = det.bbox
    if x2 > w or y2 > h:
        raise InputError(f"bbox {det.bbox} exceeds frame {w}x{h}")
    if det.area < MIN_BOX_AREA:
        if warnings is not None:
            warnings.append(f"{det.image_id}: skipped degenerate {det.label} box {det.bbox}")
        return full

    crop = rgb_to_gray(hr_image[y1:y2, x1:x2]) if hr_image.ndim == 3 else hr_image[y1:y2, x1:x2]
    edges = np.maximum(scharr_magnitude(crop), canny_edges(crop, cfg.canny_low, cfg.canny_high))
    blurred = _minmax(gaussian_blur(edges, cfg.blur_kernel, cfg.blur_sigma))

    bw, bh = x2 - x1, y2 - y1
    if cfg.fade_assignment[det.label] == "center_fade":
        fade = center_fade(bw, bh)
    else:
        fade = contour_fade(bw, bh, cfg.inverse_fade_sigma)

    full[y1:y2, x1:x2] = blurred * fade * cfg.class_weights[det.label]
    return full


def compose_heatmap(
    hr_image: np.ndarray,
    detections: list[DetectionRecord],
    cfg: HeatmapConfig,
    warnings: list[str] | None = None,
) -> ImportanceMap:
    """Accumulate region contributions and normalize by the global maximum.

    Detections are accumulated in a canonical order, making the result
    independent of input order. An empty list gives an all-zero map.
    """
    ids = {d.image_id for d in detections}
    if len(ids) > 1:
        raise InputError(f"detections span multiple images: {sorted(ids)}")
    image_id = detections[0].image_id if detections else ""

    h, w = hr_image.shape[:2]
    acc = np.zeros((h, w), dtype=np.float64)
    for det in sorted(detections, key=lambda d: (d.label, d.bbox, d.confidence)):
        acc += region_heatmap(hr_image, det, cfg, warnings)
    peak = acc.max()
    if peak > 0:
        acc /= peak
    return ImportanceMap(image_id=image_id, values=acc)


# --- 16-bit PNG persistence -------------------------------------------------

PNG_SCALE = 65535


def save_heatmap_png(path: str | Path, hmap: ImportanceMap) -> None:
    """Store round(H * 65535) as a single-channel 16-bit PNG."""
    arr = np.round(hmap.values * PNG_SCALE).astype(np.uint16)
    Image.fromarray(arr).save(path)


def load_heatmap_png(path: str | Path, image_id: str = "") -> ImportanceMap:
    arr = np.array(Image.open(path), dtype=np.uint16)
    return ImportanceMap(image_id=image_id, values=arr.astype(np.float64) / PNG_SCALE)


def save_heatmap_manifest(path: str | Path, index: dict[str, str]) -> None:
    """Persist the image_id -> heatmap-file index."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"heatmaps": index}, fh, indent=2, sort_keys=True)
    # trailing newline keeps the file diff-friendly
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("\n")


def load_heatmap_manifest(path: str | Path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)["heatmaps"]


def default_frame() -> tuple[int, int]:
    return FRAME_SIZE, FRAME_SIZE
