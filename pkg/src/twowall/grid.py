"""Space-time lattice, reproducible white noise and Dirichlet heat kernels."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "KernelSpec",
    "NoiseField",
    "heat_kernel",
    "make_grid",
    "sample_noise",
]

# Series terms below this size are dropped.
_SERIES_CUTOFF = 1e-16


@dataclass(frozen=True)
class Grid:
    """Uniform lattice on [0, 1] x [0, T].

    ``nx`` counts spatial cells (nodes ``x_i = i / nx``) and ``nt`` counts
    time steps (nodes ``t_n = n T / nt``).
    """

    nx: int
    nt: int
    T: float

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @cached_property
    def x(self) -> np.ndarray:
        x = np.arange(self.nx + 1) / self.nx
        x.flags.writeable = False
        return x

    @cached_property
    def t(self) -> np.ndarray:
        t = np.arange(self.nt + 1) * self.T / self.nt
        t.flags.writeable = False
        return t

    def x_index(self, x0: float) -> int:
        """Index of the node nearest to ``x0``."""
        return int(np.clip(np.rint(x0 * self.nx), 0, self.nx))

    def t_index(self, t0: float) -> int:
        """Index of the time level nearest to ``t0``."""
        return int(np.clip(np.rint(t0 / self.dt), 0, self.nt))


def make_grid(nx: int, nt: int, T: float) -> Grid:
    """Build a :class:`Grid`, rejecting undersized or nonpositive arguments."""
    for name, value in (("nx", nx), ("nt", nt)):
        if isinstance(value, bool) or int(value) != value:
            raise ValueError(f"{name} must be an integer, got {value!r}")
        if value < 4:
            raise ValueError(f"{name} must be >= 4, got {value}")
    if not np.isfinite(T) or T <= 0:
        raise ValueError(f"T must be a positive real, got {T!r}")
    return Grid(int(nx), int(nt), float(T))


@dataclass(frozen=True)
class NoiseField:
    """Standard normals driving the scheme, one per interior node and step.

    ``xi[i - 1, n]`` belongs to node ``i`` (1..nx-1) and step ``n``. The
    white-noise forcing of that cell is ``xi * sqrt(dt / dx)``; the matching
    Brownian-sheet increment is ``xi * sqrt(dx * dt)``.
    """

    grid: Grid
    seed: int
    stream: int
    xi: np.ndarray = field(repr=False)

    @property
    def forcing_scale(self) -> float:
        return float(np.sqrt(self.grid.dt / self.grid.dx))

    @property
    def sheet_scale(self) -> float:
        return float(np.sqrt(self.grid.dx * self.grid.dt))

    def sheet_increments(self) -> np.ndarray:
        """Brownian-sheet increments over each cell."""
        return self.xi * self.sheet_scale

    def bumped(self, i: int, n: int, h: float) -> NoiseField:
        """Copy with ``xi[i - 1, n]`` shifted by ``h``."""
        xi = np.array(self.xi, order="F")
        xi[i - 1, n] += h
        xi.flags.writeable = False
        return NoiseField(self.grid, self.seed, self.stream, xi)


def _generator(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def sample_noise(grid: Grid, seed: int, stream: int = 0) -> NoiseField:
    """Draw the noise field for ``(seed, stream)``.

    Each stream is an independent counter-based Philox sequence, so path
    ``k`` of an ensemble can be regenerated alone, in any order.
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be nonnegative integers")
    rng = _generator(int(seed), int(stream))
    # Drawn time-major so that xi[:, n] is contiguous.
    xi = rng.standard_normal((grid.nt, grid.nx - 1)).T
    xi.flags.writeable = False
    return NoiseField(grid, int(seed), int(stream), xi)


@dataclass(frozen=True)
class KernelSpec:
    """Dirichlet heat kernel on ``interval`` truncated at ``n_terms`` modes."""

    interval: tuple[float, float] = (0.0, 1.0)
    n_terms: int = 200

    def __post_init__(self):
        left, right = self.interval
        if not (0.0 <= left < right <= 1.0):
            raise ValueError(f"interval must satisfy 0 <= l < r <= 1, got {self.interval}")
        if self.n_terms < 1:
            raise ValueError("n_terms must be >= 1")


def heat_kernel(x, y, t: float, spec: KernelSpec = KernelSpec()):
    """Fundamental solution of u_t = u_xx with zero Dirichlet data on (l, r).

    Computed from the sine series

        G_t(x, y) = 2/L sum_k sin(k pi (x-l)/L) sin(k pi (y-l)/L) exp(-k^2 pi^2 t / L^2)

    with ``L = r - l``. ``x`` and ``y`` broadcast against each other.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t!r}")
    left, right = spec.interval
    length = right - left
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slack = 1e-12
    if np.any((x < left - slack) | (x > right + slack)) or np.any(
        (y < left - slack) | (y > right + slack)
    ):
        raise ValueError(f"x and y must lie in [{left}, {right}]")

    rate = np.pi**2 * t / length**2
    k_needed = int(np.ceil(np.sqrt(-np.log(_SERIES_CUTOFF) / rate)))
    k = np.arange(1, min(spec.n_terms, max(k_needed, 1)) + 1)

    xs = (x - left) / length
    ys = (y - left) / length
    xs, ys = np.broadcast_arrays(xs, ys)
    phase_x = np.sin(np.pi * np.multiply.outer(xs, k))
    phase_y = np.sin(np.pi * np.multiply.outer(ys, k))
    g = (2.0 / length) * np.sum(phase_x * phase_y * np.exp(-rate * k**2), axis=-1)

    on_edge = (np.abs(xs) < slack) | (np.abs(xs - 1) < slack)
    on_edge |= (np.abs(ys) < slack) | (np.abs(ys - 1) < slack)
    g = np.where(on_edge, 0.0, np.maximum(g, 0.0))
    return g if g.ndim else float(g)
