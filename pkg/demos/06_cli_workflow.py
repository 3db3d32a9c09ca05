"""
The command-line workflow end to end
====================================

Runs each ``vbiopsy`` subcommand in turn on a freshly generated
synthetic dataset inside a temporary directory. This is equivalent to::

    vbiopsy --out fx make-fixtures
    vbiopsy --config fx/config.json extract
    vbiopsy --config fx/config.json train-cnn
    ...
"""

# %%
import json
import tempfile
from pathlib import Path

from vbiopsy.cli import main

work = Path(tempfile.mkdtemp(prefix="vbiopsy-demo-"))
cfg = str(work / "config.json")
assert main(["--out", str(work), "make-fixtures", "--per-class", "30",
             "--test-per-class", "10"]) == 0

# %%
# Features, both branches, and both forests.
for step in (["extract"], ["train-cnn"], ["train-forest", "--mode", "radiomics"],
             ["train-forest", "--mode", "fusion"]):
    assert main(["--config", cfg, *step]) == 0

# %%
# Validation and test reports for the three models.
for model in ("cnn", "radiomics", "fusion"):
    for split in ("validation", "test"):
        main(["--config", cfg, "eval", "--model", model, "--split", split])

# %%
# A Grad-CAM case-study bundle for one test image, then the robustness sweep.
image = sorted((work / "test" / "bright_ellipse").glob("*.png"))[0]
main(["--config", cfg, "gradcam", str(image)])
main(["--config", cfg, "sweep"])

# %%
run = work / "run"
print("artifacts:", sorted(p.relative_to(run).as_posix() for p in run.rglob("*") if p.is_file()))
print(json.loads((run / "report_fusion_test.json").read_text())["confusion"])
