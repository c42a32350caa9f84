"""Score frames against a question and build a repetition plan.

Walks through the inference-time path on synthetic data: a fresh scorer
outputs the zero-centered similarity prior alone; plans duplicate the top-k
frames in place.
"""

import numpy as np

from repeatgain import (
    ScorerConfig,
    SyntheticOracleSpec,
    forward,
    generate_synthetic_dataset,
    init_params,
    plan,
)

spec = SyntheticOracleSpec(seed=5, n_frames=16, dim=32, n_key_frames=5)
dataset = generate_synthetic_dataset(spec, 1)
sample = dataset.samples[0]
truth = dataset.truth[sample.sample_id]

config = ScorerConfig(dim=32, n_heads=8, ffn_hidden=32, prior_weight=5.0, seed=0)
params = init_params(config)

scores = forward(sample, params, config)
prior = config.prior_weight * (sample.features.sims - sample.features.sims.mean())
print("fresh scorer == similarity prior:", np.allclose(scores, prior))

print("\nframe  score    true gain  key?")
for i in range(sample.n_frames):
    marker = "*" if i in truth.key_frames else ""
    print(f"{i:5d}  {scores[i]:+.4f}  {truth.gains[i]:+.4f}   {marker}")

repetition = plan(sample, params, config, k=4)
print("\nselected for repetition:", list(repetition.selected))
print("frame sequence fed downstream:")
print(" ", list(repetition.sequence))
print("length:", len(repetition.sequence), f"({sample.n_frames} original + 4 repeats)")
