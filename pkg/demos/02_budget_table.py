"""Analytic parameter/MAC accounting for the network and its fast variant."""

from landmark_sr.model import ModelConfig, count_macs, count_params, plan_table

for blocks in (5, 1):
    cfg = ModelConfig(refinement_blocks=blocks)
    params = count_params(cfg)
    macs = count_macs(cfg)
    print(f"refinement_blocks={blocks}: {params / 1e6:.3f} M params, "
          f"{macs / 1e9:.3f} GMACs at 16x16 input")

print("\nper-layer table (default config):\n")
print(plan_table(ModelConfig()))
