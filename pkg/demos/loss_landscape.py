"""How the combined loss moves with its two dials.

Sweeps the focusing exponent and the mixing weight on one random tensor
pair, then cross-checks the closed-form gradient against central
differences.
"""

import dataclasses

import numpy as np

from spineseg.losses import (
    LossParams,
    combined_grad,
    combined_loss,
    dice_loss,
    finite_diff_grad,
    focal_loss,
    one_hot,
)

rng = np.random.default_rng(3)
raw = rng.uniform(0.1, 1.1, size=(8, 8, 4))
pred = raw / raw.sum(axis=2, keepdims=True)
true = one_hot(rng.integers(0, 4, size=(8, 8)))

print("gamma sweep (alpha_mix fixed at 0.6):")
for gamma in (0.0, 0.4, 1.0, 2.0, 4.0):
    params = LossParams(gamma=gamma)
    print(f"  gamma {gamma:>4}: focal {focal_loss(pred, true, params):.6f}  "
          f"combined {combined_loss(pred, true, params):.6f}")

print("\nalpha_mix sweep (gamma fixed at 4):")
base = LossParams()
for mix in (0.0, 0.25, 0.5, 0.75, 1.0):
    params = dataclasses.replace(base, alpha_mix=mix)
    print(f"  mix {mix:.2f}: combined {combined_loss(pred, true, params):.6f}")
print(f"  (dice alone: {dice_loss(pred, true, base):.6f})")

analytic = combined_grad(pred, true, base)
numeric = finite_diff_grad("combined", pred, true, base)
rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
print(f"\ngradient check on {analytic.size} partials: "
      f"max relative error {rel.max():.2e}")
