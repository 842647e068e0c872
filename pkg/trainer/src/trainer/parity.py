"""Cross-check the torch losses against exported vector files.

Each vector record carries its own parameters and the expected focal,
dice and combined values at full float precision.  Evaluation runs in
float64 so the comparison exercises the formulas, not rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .config import LossSettings
from .losses import combined_loss, dice_loss, focal_loss

TOLERANCE = 1e-5

_LOSSES = (("focal", focal_loss), ("dice", dice_loss), ("combined", combined_loss))


@dataclass
class ParityReport:
    source: str
    count: int = 0
    max_deviation: float = 0.0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.count > 0 and not self.failures

    def render(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [
            f"loss parity against {self.source}",
            f"vectors: {self.count}",
            f"max deviation: {self.max_deviation:.3e} (tolerance {TOLERANCE:g})",
        ]
        lines.extend(self.failures)
        lines.append(f"verdict: {verdict}")
        return "\n".join(lines) + "\n"


def read_vectors(path) -> list[dict]:
    text = Path(path).read_text(encoding="ascii")
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def check_vector_file(path, tolerance: float = TOLERANCE) -> ParityReport:
    """Evaluate every record in a vector file; deviations above tolerance fail."""
    report = ParityReport(source=str(path))
    for rec in read_vectors(path):
        shape = (rec["height"], rec["width"], len(rec["alpha_class"]))
        pred = torch.tensor(rec["pred"], dtype=torch.float64).reshape(shape)
        true = torch.tensor(rec["true"], dtype=torch.float64).reshape(shape)
        settings = LossSettings(
            gamma=rec["gamma"],
            alpha_mix=rec["alpha_mix"],
            alpha_class=tuple(rec["alpha_class"]),
            epsilon=rec["epsilon"],
            prob_floor=rec["prob_floor"],
        )
        report.count += 1
        for name, fn in _LOSSES:
            got = float(fn(pred, true, settings))
            dev = abs(got - rec[name])
            report.max_deviation = max(report.max_deviation, dev)
            if dev > tolerance:
                report.failures.append(
                    f"vector {rec['index']}: {name} expected {rec[name]!r}, got {got!r}"
                )
    return report
