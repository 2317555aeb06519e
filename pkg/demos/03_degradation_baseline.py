"""The 8x degradation protocol and the interpolation baseline it implies.

Shows bilinear vs bicubic 128->16 degradation, the x8 reference upscaler,
and the PSNR/SSIM/MS-SSIM the baseline achieves on a few synthetic faces.
"""

import numpy as np

from landmark_sr.data import DegradationConfig, degrade, to_unit, upscale_reference
from landmark_sr.metrics import ms_ssim, psnr, ssim
from landmark_sr.synth import sample_face

rng = np.random.Generator(np.random.PCG64(4))

for mode in ("bilinear", "bicubic"):
    cfg = DegradationConfig(mode=mode)
    scores = {"psnr": [], "ssim": [], "ms_ssim": []}
    for _ in range(8):
        face, _ = sample_face(rng)
        hr = face.transpose(2, 0, 1) * 2 - 1
        lr = degrade(hr, cfg)
        up = upscale_reference(lr, cfg)
        p, t = to_unit(up), to_unit(hr)
        scores["psnr"].append(psnr(p, t))
        scores["ssim"].append(ssim(p, t))
        scores["ms_ssim"].append(ms_ssim(p, t))
    print(f"{mode:>8} baseline over 8 faces: "
          f"PSNR {np.mean(scores['psnr']):6.2f} dB, "
          f"SSIM {np.mean(scores['ssim']):.4f}, "
          f"MS-SSIM {np.mean(scores['ms_ssim']):.4f}")

print("\n(full-scale CelebA reference for the bilinear baseline: 20.75 dB / 0.574 SSIM;"
      "\n synthetic faces are easier, so desk-scale numbers sit higher)")
