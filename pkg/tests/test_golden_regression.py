"""Regression of the sphere defect report against the shipped golden.

The golden was produced by the first validated run of the `defect`
experiment; the tolerance manifest allows for libm/BLAS variation across
machines while pinning the defect's sign and shape.
"""

import json
import os

from fraclap import cli

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "..", "goldens")


def test_defect_golden_regression(tmp_path):
    cfg = {
        "experiment": "defect",
        "manifold": {"kind": "sphere", "radius": 1.0, "l_max": 16},
        "frac": {"s": [0.8]},
        "experiment_params": {"d_min": 0.02, "d_max": 0.5, "n_radii": 10},
        "output": {"dir": str(tmp_path)},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["defect", "--config", str(path),
                     "--out", str(tmp_path), "--golden", GOLDEN_DIR]) == 0
