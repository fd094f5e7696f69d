"""Conditional covariance and correlation scans over rectangles."""

__version__ = "0.1.0"

from .moments import (CondMoments, Interval, PairedSample, Rectangle, conditional_correlation,
                      conditional_covariance, conditional_moments, truncated_mean)
from .grid import (BoundedGrid, LocalWindows, QuantileGrid, ScanReport, SummedAreaTable,
                   UpperTails, build_grid, build_sat, scan, scan_local, support_product_check)
from .multivar import CondCorrMatrix, MultiSample, cond_corr_matrix, mutual_scan
from .inference import PermutationTestResult, permutation_test

__all__ = [
    "CondMoments", "Interval", "PairedSample", "Rectangle", "conditional_correlation",
    "conditional_covariance", "conditional_moments", "truncated_mean",
    "BoundedGrid", "LocalWindows", "QuantileGrid", "ScanReport", "SummedAreaTable",
    "UpperTails", "build_grid", "build_sat", "scan", "scan_local", "support_product_check",
    "CondCorrMatrix", "MultiSample", "cond_corr_matrix", "mutual_scan",
    "PermutationTestResult", "permutation_test",
]
