"""Drive the command line pipeline end to end on synthetic volumes."""

import tempfile
from pathlib import Path

from spineseg.cli import main
from spineseg.phantoms import make_case_volumes
from spineseg.volume_io import save_volume

root = Path(tempfile.mkdtemp(prefix="spineseg_cli_demo_"))
volumes = root / "volumes"
(volumes / "images").mkdir(parents=True)
(volumes / "masks").mkdir()
for name, seed in (("demo1_t1", 81), ("demo2_t2", 82), ("demo3_t2_space", 83)):
    image, mask = make_case_volumes(seed, slices=3, height=32, width=40)
    save_volume(volumes / "images" / f"{name}.mha", image)
    save_volume(volumes / "masks" / f"{name}.mha", mask)

work = root / "work"
steps = [
    ["extract", "--input", str(volumes), "--output", str(work)],
    ["restore", "--output", str(work)],
    ["filter", "--output", str(work)],
    # self-evaluation: restored masks double as a perfect prediction set
    ["evaluate", "--output", str(work), "--input", str(work / "restored")],
    ["report", "--output", str(work)],
]
for argv in steps:
    print(f"$ spineseg {' '.join(argv)}")
    code = main(argv)
    assert code == 0, f"step failed with exit code {code}"
    print()

print(f"workspace kept at {work}")
