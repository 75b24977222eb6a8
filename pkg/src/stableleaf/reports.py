"""Report records shared by the leaf and analysis layers, plus JSON helpers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from .errors import InsufficientDecay

SCHEMA_VERSION = "v1"
FIT_WINDOW = (1e-13, 1e-2)
MIN_FIT_POINTS = 4


@dataclass
class ConvergenceReport:
    map_name: str
    ks: list[int]
    gaps: list[float]  # |phi^(k)| at p
    H: list[float]  # H-bar_k, sup of H_k over the leaf (and tube when sampled)
    leaf_dists: list[float]
    fitted_rate: float
    K_emp: dict[str, float] = field(default_factory=dict)
    fit_source: str = "gaps"
    exact_convergence: bool = False
    converged_k: int | None = None


@dataclass
class ContractionReport:
    map_name: str
    ks: list[int]
    ratios: list[float]
    bound_rate: float
    K_emp: float
    direct_ratios: list[float] = field(default_factory=list)
    n_pairs: int = 0
    seed: int = 0


@dataclass
class EscapeReport:
    map_name: str
    eta_tilde: float
    cap: int
    samples: list[tuple[tuple[float, float], int]]
    offsets: list[float]
    stayers: list[tuple[float, float]]
    controls: list[tuple[float, float]]
    control_shift: list[float]
    controls_stay: bool
    slope: float = math.nan
    expected_slope: float = math.nan


def fit_log_rate(ks, values, window=FIT_WINDOW) -> tuple[float, tuple[int, int]]:
    """Least-squares slope of ``log(value)`` against ``k``.

    Only the longest run of consecutive entries inside ``window`` is used, so
    the pre-asymptotic head and the machine-precision floor are skipped.
    Returns the slope and the ``[start, stop)`` index range of the run.
    """
    ks = np.asarray(ks, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = (v >= window[0]) & (v <= window[1]) & np.isfinite(v)
    best, start = (0, 0), None
    for i, flag in enumerate(list(ok) + [False]):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    lo, hi = best
    if hi - lo < MIN_FIT_POINTS:
        raise InsufficientDecay(f"only {hi - lo} values in {window}; need {MIN_FIT_POINTS}")
    slope = np.polyfit(ks[lo:hi], np.log(v[lo:hi]), 1)[0]
    return float(slope), (lo, hi)


def sanitize(obj):
    """Convert dataclasses, tuples and numpy scalars to JSON-safe values.

    Non-finite floats become strings (``"inf"``, ``"-inf"``, ``"nan"``).
    """
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: sanitize(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(sanitize(obj), indent=2, sort_keys=True) + "\n"
