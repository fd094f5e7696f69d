"""Scanning regression residuals for leftover structure.

A linear model in two predictors is fitted to data whose noise scale grows
with the signal. The
residuals are uncorrelated with the fitted values overall, but the CLI's
residual diagnostic finds tail regions where they are not.
"""
import os
import subprocess
import sys
import tempfile

import numpy as np

from condscan.csvio import write_table

rng = np.random.default_rng(11)
a = rng.uniform(0, 3, 4_000)
b = rng.normal(size=a.size)
signal = 1.0 + 2.0 * a - 0.5 * b
y = signal + rng.normal(size=a.size) * (0.2 + a ** 2)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "fit.csv")
    with open(path, "w", newline="") as handle:
        write_table(handle, ["a", "b", "y"], np.column_stack([a, b, y]))
    out = subprocess.run([sys.executable, "-m", "condscan", "residual-diag", "--input", path,
                          "--perm", "99", "--seed", "11"],
                         capture_output=True, text=True, check=True)
    print(out.stdout)
