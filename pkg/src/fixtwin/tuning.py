"""Fit metrics and exhaustive grid search of model parameters."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graph import FixationParams
from .simulate import SimConfig

logger = logging.getLogger(__name__)


class MetricError(ValueError):
    """Reference trace unusable for the requested metric."""


def align(times, values, ref_times) -> np.ndarray:
    """Linear interpolation of ``values`` (``(nt,)`` or ``(nt, k)``) onto ``ref_times``."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.interp(ref_times, times, values)
    return np.stack([np.interp(ref_times, times, values[:, k]) for k in range(values.shape[1])], axis=1)


def rmse_nrmse(sim, ref, sim_times=None, ref_times=None) -> tuple[float, float]:
    """RMSE over all samples and RMSE divided by the reference range.

    When both time grids are given the simulated trace is interpolated onto
    the reference times first.  A flat reference raises :class:`MetricError`
    for the normalized value; use :func:`rmse` when only the RMSE is needed.
    """
    r = rmse(sim, ref, sim_times, ref_times)
    ref = np.asarray(ref, dtype=float)
    span = float(ref.max() - ref.min())
    if span == 0.0:
        raise MetricError("reference range is zero, NRMSE undefined")
    return r, r / span


def rmse(sim, ref, sim_times=None, ref_times=None) -> float:
    ref = np.asarray(ref, dtype=float)
    if ref.size == 0:
        raise MetricError("empty reference trace")
    sim = np.asarray(sim, dtype=float)
    if sim_times is not None and ref_times is not None:
        sim = align(sim_times, sim, ref_times)
    if sim.shape != ref.shape:
        raise MetricError(f"trace shapes differ: {sim.shape} vs {ref.shape}")
    return float(np.sqrt(np.mean((sim - ref) ** 2)))


@dataclass
class TuneResult:
    names: tuple[str, str]
    grids: tuple[np.ndarray, np.ndarray]
    rmse: np.ndarray  # (len(grid0), len(grid1)); nan marks failed points
    best: dict
    best_rmse: float

    @property
    def invalid(self) -> np.ndarray:
        return ~np.isfinite(self.rmse)

    def table(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(b), float(self.rmse[i, j]))
                for (i, a), (j, b) in itertools.product(enumerate(self.grids[0]), enumerate(self.grids[1]))]


def simulate_outputs(params, cfg: SimConfig, signal: str = "y"):
    """``(times, outputs)`` for :class:`FixationParams` or any object with ``simulate_outputs``."""
    if not isinstance(params, FixationParams):
        return params.simulate_outputs(cfg, signal)
    from .fixation import fixation_model, simulate_fixation

    tr = simulate_fixation(fixation_model(params), cfg)
    return tr.times, tr.outputs[signal]


def _evaluate(args):
    params, cfg, signal, ref_times, ref_values = args
    try:
        t, vals = simulate_outputs(params, cfg, signal)
        return rmse(vals, ref_values, t, ref_times)
    except Exception as exc:  # a failing point is recorded, the search goes on
        logger.warning("grid point failed: %s", exc)
        return float("nan")


def grid_search_tune(base, grids: dict, ref_times, ref_values, cfg: SimConfig,
                     signal: str = "y", workers: int = 1) -> TuneResult:
    """Exhaustive search over two parameters of ``base``.

    ``base`` is a :class:`FixationParams` or a parsed configuration; both
    provide ``with_(**values)``.  ``grids`` maps two parameter names (for
    example ``kappa_1`` and ``kappa_6``) to 1-D value arrays.  Ties go to the
    lexicographically smallest parameter pair.
    """
    if len(grids) != 2:
        raise ValueError("grid search takes exactly two parameters")
    names = tuple(grids)
    g0, g1 = (np.asarray(grids[k], dtype=float).ravel() for k in names)
    if g0.size == 0 or g1.size == 0:
        raise ValueError("parameter grids must be nonempty")
    ref_times = np.asarray(ref_times, dtype=float)
    ref_values = np.asarray(ref_values, dtype=float)
    jobs = [(base.with_(**{names[0]: float(a), names[1]: float(b)}), cfg, signal, ref_times, ref_values)
            for a in g0 for b in g1]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(_evaluate, jobs))
    else:
        vals = [_evaluate(j) for j in jobs]
    surf = np.array(vals, dtype=float).reshape(g0.size, g1.size)
    if not np.any(np.isfinite(surf)):
        raise RuntimeError("every grid point failed to simulate")
    best_val = np.nanmin(surf)
    # lexicographic tie-break on the parameter values themselves
    cands = [(g0[i], g1[j]) for i, j in zip(*np.nonzero(surf == best_val))]
    a, b = min(cands)
    return TuneResult(names, (g0, g1), surf, {names[0]: float(a), names[1]: float(b)}, float(best_val))
