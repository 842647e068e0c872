"""Repair one defective mask and show what the pass actually did.

The synthetic exporter hands us a 16-shade RGB mask with injected
singletons, vertical runs and recolored columns.  The repair drives it to
the four canonical classes and reports how many rounds that took.
"""

import numpy as np

from spineseg.phantoms import make_defective_mask
from spineseg.restore import apta

mask = make_defective_mask(seed_or_rng=5, height=40, width=48)

shades_in = {tuple(c) for c in mask.reshape(-1, 3)}
print(f"input: {mask.shape[0]}x{mask.shape[1]} RGB, {len(shades_in)} distinct shades")

result = apta(mask)
print(f"converged: {result.converged} after {result.rounds} round(s)")

values, counts = np.unique(result.labels, return_counts=True)
names = ("background", "vertebrae", "canal", "disc")
for value, count in zip(values, counts):
    share = count / result.labels.size
    print(f"  class {value} ({names[value]:<10}) {count:>5} px  {share:6.1%}")

# crude ASCII rendering, one character per 2x2 block
glyphs = " #:+"
h, w = result.labels.shape
print()
for r in range(0, h, 2):
    row = result.labels[r, :w - w % 2:2]
    print("".join(glyphs[v] for v in row))
