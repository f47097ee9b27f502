"""Monte Carlo law of ``u(x0, t0)``: ensembles, the margin event, KDE and
atom diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from twowall.grid import sample_noise
from twowall.malliavin import malliavin_norm
from twowall.solver import SolverConfig, solve, solve_many
from twowall.walls import WallPair

__all__ = [
    "DensityEstimate",
    "EnsembleConfig",
    "EnsembleError",
    "SampleSet",
    "atom_diagnostic",
    "detect_event",
    "kde",
    "run_ensemble",
    "silverman_bandwidth",
]

# Paths marched together; fixed so results do not depend on n_jobs.
CHUNK = 250


class EnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    """``N`` independent paths of ``solver``; path ``k`` uses noise stream
    ``k`` of ``base_seed``."""

    solver: SolverConfig
    N: int
    base_seed: int
    x0_index: int
    t0_index: int
    a: float
    b: float
    norm_stride: int | None = None

    def __post_init__(self):
        g = self.solver.grid
        if self.N < 100:
            raise ValueError("an ensemble needs N >= 100 paths")
        if not (0 < self.x0_index < g.nx and 0 < self.t0_index <= g.nt):
            raise ValueError("observation point must be interior with t0 > 0")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")

    @property
    def x0(self) -> float:
        return float(self.solver.grid.x[self.x0_index])

    @property
    def t0(self) -> float:
        return float(self.solver.grid.t[self.t0_index])

    def walls_at_observation(self) -> tuple[float, float]:
        w = self.solver.walls
        return float(w.h1(self.x0, self.t0)), float(w.h2(self.x0, self.t0))


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray = field(repr=False)
    in_event: np.ndarray = field(repr=False)
    config: EnsembleConfig = field(repr=False)
    norms: np.ndarray | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return int(self.values.size)

    @property
    def event_frequency(self) -> float:
        return float(self.in_event.mean())


def detect_event(value, walls: WallPair | tuple[float, float], a: float, b: float,
                 x0: float | None = None, t0: float | None = None):
    """Margin event: ``u - h1 >= a`` and ``h2 - u >= b`` at the observation.

    ``walls`` is either a :class:`WallPair` (then ``x0, t0`` are required) or
    the pair ``(h1, h2)`` already evaluated there.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if isinstance(walls, WallPair):
        h1, h2 = float(walls.h1(x0, t0)), float(walls.h2(x0, t0))
    else:
        h1, h2 = walls
    value = np.asarray(value, dtype=float)
    out = (value - h1 >= a) & (h2 - value >= b)
    return bool(out) if out.ndim == 0 else out


def _chunk_values(config: EnsembleConfig, start: int, stop: int) -> np.ndarray:
    g = config.solver.grid
    noises = [sample_noise(g, config.base_seed, k) for k in range(start, stop)]
    try:
        return solve_many(config.solver, noises, (config.x0_index, config.t0_index))
    except Exception as exc:
        # Re-run one path at a time to name the failing seed.
        for k, noise in zip(range(start, stop), noises):
            try:
                solve(config.solver, noise)
            except Exception as inner:
                raise EnsembleError(
                    f"path {k} (base_seed={config.base_seed}, stream={k}) failed: {inner}"
                ) from inner
        raise EnsembleError(f"paths {start}..{stop - 1} failed: {exc}") from exc


def _chunk_norms(config: EnsembleConfig, start: int, stop: int) -> np.ndarray:
    g = config.solver.grid
    out = np.empty(stop - start)
    for idx, k in enumerate(range(start, stop)):
        noise = sample_noise(g, config.base_seed, k)
        path = solve(config.solver, noise)
        out[idx] = malliavin_norm(path, noise, config.x0_index, config.t0_index,
                                  config.norm_stride)
    return out


def run_ensemble(config: EnsembleConfig, n_jobs: int = 1,
                 progress: Callable[[int, int], None] | None = None) -> SampleSet:
    """Simulate ``N`` paths and record ``u(x0, t0)`` and the margin event.

    Work is split into fixed chunks of paths, so the output is identical for
    any ``n_jobs``.
    """
    bounds = [(s, min(s + CHUNK, config.N)) for s in range(0, config.N, CHUNK)]
    if n_jobs == 1:
        parts = []
        for s, e in bounds:
            parts.append(_chunk_values(config, s, e))
            if progress:
                progress(e, config.N)
    else:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=n_jobs)(delayed(_chunk_values)(config, s, e) for s, e in bounds)
    values = np.concatenate(parts)
    if not np.all(np.isfinite(values)):
        k = int(np.argmax(~np.isfinite(values)))
        raise EnsembleError(f"path {k} (base_seed={config.base_seed}) produced a non-finite value")
    norms = None
    if config.norm_stride:
        norms = np.concatenate([_chunk_norms(config, s, e) for s, e in bounds])
    flags = detect_event(values, config.walls_at_observation(), config.a, config.b)
    values.flags.writeable = False
    flags.flags.writeable = False
    return SampleSet(values, flags, config, norms)


def silverman_bandwidth(samples: np.ndarray) -> float:
    """Normal-reference rule ``1.06 std N^{-1/5}``."""
    samples = np.asarray(samples, dtype=float)
    return float(1.06 * samples.std(ddof=1) * samples.size ** (-0.2))


@dataclass(frozen=True)
class DensityEstimate:
    points: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    bandwidth: float
    total_mass: float


def _gaussian_kde(samples: np.ndarray, points: np.ndarray, bw: float) -> np.ndarray:
    out = np.empty(points.size)
    norm = 1.0 / (samples.size * bw * np.sqrt(2.0 * np.pi))
    for start in range(0, points.size, 256):
        z = (points[start:start + 256, None] - samples[None, :]) / bw
        out[start:start + 256] = np.exp(-0.5 * z**2).sum(axis=1) * norm
    return out


def kde(samples, bandwidth: float | str | Callable = "silverman",
        interval: tuple[float, float] | None = None, n_points: int = 201) -> DensityEstimate:
    """Gaussian kernel density estimate.

    ``samples`` is a :class:`SampleSet` (evaluated on ``(h1 + a, h2 - b)`` at
    the observation point) or a plain array (evaluated on ``interval``, by
    default the sample range). ``total_mass`` integrates the estimate over
    the whole line by the trapezoid rule.
    """
    if isinstance(samples, SampleSet):
        values = samples.values
        if interval is None:
            h1, h2 = samples.config.walls_at_observation()
            interval = (h1 + samples.config.a, h2 - samples.config.b)
    else:
        values = np.asarray(samples, dtype=float).ravel()
    if values.size < 100:
        raise ValueError("kde needs at least 100 samples")
    if np.ptp(values) == 0.0:
        raise ValueError("all samples are identical (an atom); see atom_diagnostic")
    if bandwidth == "silverman":
        bw = silverman_bandwidth(values)
    elif callable(bandwidth):
        bw = float(bandwidth(values))
    else:
        bw = float(bandwidth)
    if not bw > 0:
        raise ValueError(f"bandwidth must be positive, got {bw}")
    if interval is None:
        interval = (float(values.min()), float(values.max()))
    lo, hi = interval
    if not lo < hi:
        raise ValueError(f"empty evaluation interval {interval}")
    points = np.linspace(lo, hi, n_points)
    density = _gaussian_kde(values, points, bw)
    wide = np.linspace(values.min() - 8 * bw, values.max() + 8 * bw, 8001)
    total = float(trapezoid(_gaussian_kde(values, wide, bw), wide))
    return DensityEstimate(points, density, bw, total)


def atom_diagnostic(samples, widths: Sequence[float]) -> list[float]:
    """Largest fraction of samples inside any window of each width."""
    values = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, float)
    values = np.sort(values.ravel())
    widths = [float(w) for w in widths]
    if any(w <= 0 for w in widths):
        raise ValueError("widths must be positive")
    masses = []
    for w in widths:
        ends = np.searchsorted(values, values + w, side="right")
        masses.append(float((ends - np.arange(values.size)).max() / values.size))
    return masses


def default_widths(gap: float) -> list[float]:
    return [1e-2 * gap, 1e-3 * gap, 1e-4 * gap]
