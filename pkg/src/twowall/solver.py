"""Penalized time-stepper for the two-wall problem.

One step of the scheme, per interior node ``i``:

1. explicit drift and noise
   ``u* = u + dt f(u) + sigma(u) xi sqrt(dt/dx)``;
2. implicit diffusion ``(I + dt A_h) u** = u*`` with the 3-point Dirichlet
   Laplacian ``A_h``;
3. implicit penalty, the scalar equation
   ``u = u** + dt (up(u) - down(u))`` with the walls taken at ``t_{n+1}``.

The reflection-measure increments of the step are ``up(u) dx dt`` and
``down(u) dx dt`` evaluated at the new state.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import solve_banded

from twowall.grid import Grid, NoiseField, sample_noise
from twowall.walls import CoefficientSet, WallPair

__all__ = [
    "InitialProfile",
    "PenaltyKind",
    "PenaltySolveError",
    "SolutionPath",
    "SolverConfig",
    "SweepResult",
    "complementarity",
    "penalty_forces",
    "penalty_slopes",
    "solve",
    "step",
    "sweep",
]

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
# u0 band violations up to this size are clipped with a warning.
CLIP_TOL = 1e-12


class PenaltySolveError(RuntimeError):
    """The scalar penalty equation did not converge."""


class PenaltyKind(str, enum.Enum):
    HARD = "hard"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class InitialProfile:
    """Initial datum vanishing at both ends: ``zero`` or
    ``amplitude * sin(mode * pi * x)`` (``sine``)."""

    kind: str = "zero"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        defaults = {"zero": {}, "sine": {"amplitude": 1.0, "mode": 1.0}}
        if self.kind not in defaults:
            raise ValueError(f"unknown initial profile {self.kind!r}")
        merged = dict(defaults[self.kind])
        for key, value in (self.params or {}).items():
            if key not in merged:
                raise ValueError(f"unknown parameter {key!r} for initial profile {self.kind!r}")
            merged[key] = float(value)
        if self.kind == "sine" and merged["mode"] != int(merged["mode"]):
            raise ValueError("sine initial profile needs an integer mode")
        object.__setattr__(self, "params", merged)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        u = self.params["amplitude"] * np.sin(self.params["mode"] * np.pi * x)
        # sin(k pi) is not exactly zero in floating point
        return np.where((x == 0.0) | (x == 1.0), 0.0, u)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    walls: WallPair
    coeffs: CoefficientSet
    u0: InitialProfile = field(default_factory=InitialProfile)
    epsilon: float = 1e-2
    delta: float = 1e-2
    penalty: PenaltyKind = PenaltyKind.HARD

    def __post_init__(self):
        if not (self.epsilon > 0 and self.delta > 0):
            raise ValueError("epsilon and delta must be positive")
        object.__setattr__(self, "penalty", PenaltyKind(self.penalty))

    def with_(self, **changes) -> SolverConfig:
        return replace(self, **changes)

    def initial_state(self) -> np.ndarray:
        """``u0`` on the grid, checked against the walls at ``t = 0``."""
        x = self.grid.x
        u = self.u0(x)
        h1 = self.walls.h1(x, 0.0)
        h2 = self.walls.h2(x, 0.0)
        excess = np.maximum(h1 - u, u - h2)
        worst = float(excess.max())
        if worst > CLIP_TOL:
            i = int(np.argmax(excess))
            raise ValueError(f"u0 leaves the wall band at x={x[i]:g} by {worst:.3g}")
        if worst > 0:
            warnings.warn(f"u0 clipped into the wall band (violation {worst:.3g})", stacklevel=2)
            u = np.clip(u, h1, h2)
            u[0] = u[-1] = 0.0
        return u


@dataclass(frozen=True)
class SolutionPath:
    """Penalized field and reflection-measure increments.

    ``u[i, n]`` is the field at ``(x_i, t_n)``; ``eta[i, n]`` and ``xi[i, n]``
    are the lower and upper measure masses of the cell that ends at time
    ``t_{n+1}`` (boundary rows are zero).
    """

    u: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)
    seed: int
    config: SolverConfig = field(repr=False)


def penalty_forces(u, h1, h2, epsilon: float, delta: float, kind=PenaltyKind.HARD):
    """Restoring forces ``(up, down)``, both nonnegative.

    Hard: ``up = (u - h1)^- / delta``, ``down = (u - h2)^+ / epsilon``.
    Smooth: ``up = arctan(((u - h1) ^ 0)^2) / delta`` and
    ``down = arctan(((h2 - u) ^ 0)^2) / epsilon``.
    """
    u = np.asarray(u, dtype=float)
    below = np.minimum(u - h1, 0.0)
    above = np.minimum(h2 - u, 0.0)
    if PenaltyKind(kind) is PenaltyKind.HARD:
        return -below / delta, -above / epsilon
    return np.arctan(below**2) / delta, np.arctan(above**2) / epsilon


def penalty_slopes(u, h1, h2, epsilon: float, delta: float, kind=PenaltyKind.HARD):
    """u-derivatives ``(up', down')`` of :func:`penalty_forces`.

    ``up' <= 0 <= down'``. For the Hard kind the kink at a wall takes the
    one-sided slope from the violating side.
    """
    u = np.asarray(u, dtype=float)
    below = np.minimum(u - h1, 0.0)
    above = np.minimum(h2 - u, 0.0)
    if PenaltyKind(kind) is PenaltyKind.HARD:
        return (np.where(u <= h1, -1.0 / delta, 0.0),
                np.where(u >= h2, 1.0 / epsilon, 0.0))
    return (2.0 * below / (1.0 + below**4) / delta,
            -2.0 * above / (1.0 + above**4) / epsilon)


@lru_cache(maxsize=32)
def _diffusion_bands(grid: Grid) -> np.ndarray:
    """Banded form of ``I + dt A_h`` on the interior nodes."""
    m = grid.nx - 1
    r = grid.dt / grid.dx**2
    ab = np.zeros((3, m))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    ab.flags.writeable = False
    return ab


def diffuse(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(I + dt A_h) v = rhs`` for interior values (rows 1..nx-1)."""
    v = solve_banded((1, 1), _diffusion_bands(grid), rhs, check_finite=False)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("tridiagonal diffusion solve produced non-finite values")
    return v


def _resolve_penalty(uss, h1, h2, epsilon, delta, kind, dt):
    """Solve ``u = uss + dt (up(u) - down(u))`` nodewise."""
    kd = dt / delta
    ke = dt / epsilon
    if kind is PenaltyKind.HARD:
        u = np.where(uss < h1, (uss + kd * h1) / (1.0 + kd), uss)
        return np.where(uss > h2, (uss + ke * h2) / (1.0 + ke), u)

    active = (uss < h1) | (uss > h2)
    if not np.any(active):
        return uss
    u = uss.copy()
    a_uss = uss[active]
    a_h1 = np.broadcast_to(h1, uss.shape)[active]
    a_h2 = np.broadcast_to(h2, uss.shape)[active]
    lo = np.where(a_uss < a_h1, a_uss, a_h2)
    hi = np.where(a_uss < a_h1, a_h1, a_uss)
    x = a_uss.copy()
    for _ in range(NEWTON_MAX_ITER):
        up, down = penalty_forces(x, a_h1, a_h2, epsilon, delta, kind)
        g = x - a_uss - dt * (up - down)
        todo = np.abs(g) > NEWTON_TOL
        if not np.any(todo):
            break
        lo = np.where(g < 0, x, lo)
        hi = np.where(g > 0, x, hi)
        dup, ddown = penalty_slopes(x, a_h1, a_h2, epsilon, delta, kind)
        trial = x - g / (1.0 - dt * (dup - ddown))
        inside = (trial > lo) & (trial < hi)
        # converged nodes stay put, so a node's result does not depend on
        # which other nodes (or paths) share the batch
        x = np.where(todo, np.where(inside, trial, 0.5 * (lo + hi)), x)
    else:
        raise PenaltySolveError(
            f"smooth penalty solve did not converge in {NEWTON_MAX_ITER} iterations"
        )
    u[active] = x
    return u


class _Scheme:
    """Precomputed lattice data for one configuration."""

    def __init__(self, config: SolverConfig):
        self.config = config
        g = config.grid
        self.grid = g
        self.x = g.x[1:-1]
        self.h1, self.h2 = config.walls.on_grid(g)
        self.scale = np.sqrt(g.dt / g.dx)
        self.kind = PenaltyKind(config.penalty)

    def advance(self, u: np.ndarray, xi_col: np.ndarray, n: int):
        """One step on a full column (or a stack of columns, paths last)."""
        cfg, g = self.config, self.grid
        x = self.x if u.ndim == 1 else self.x[:, None]
        t = g.t[n]
        inner = u[1:-1]
        ustar = (inner + g.dt * cfg.coeffs.f(x, t, inner)
                 + cfg.coeffs.sigma(x, t, inner) * xi_col * self.scale)
        uss = diffuse(g, ustar)
        h1 = self.h1[1:-1, n + 1]
        h2 = self.h2[1:-1, n + 1]
        if u.ndim > 1:
            h1, h2 = h1[:, None], h2[:, None]
        new_inner = _resolve_penalty(uss, h1, h2, cfg.epsilon, cfg.delta, self.kind, g.dt)
        up, down = penalty_forces(new_inner, h1, h2, cfg.epsilon, cfg.delta, self.kind)
        out = np.zeros_like(u)
        out[1:-1] = new_inner
        cell = g.dx * g.dt
        eta = np.zeros_like(u)
        xim = np.zeros_like(u)
        eta[1:-1] = up * cell
        xim[1:-1] = down * cell
        return out, eta, xim


def step(state: np.ndarray, noise_column: np.ndarray, n: int, config: SolverConfig):
    """Advance ``state`` (the column at ``t_n``) by one time step.

    Returns ``(next_state, eta_increment, xi_increment)``.
    """
    state = np.asarray(state, dtype=float)
    if state.shape[0] != config.grid.nx + 1:
        raise ValueError("state must hold nx + 1 nodes")
    if np.any(state[0] != 0.0) or np.any(state[-1] != 0.0):
        raise ValueError("state must vanish at x = 0 and x = 1")
    if not 0 <= n < config.grid.nt:
        raise ValueError(f"step index {n} outside 0..{config.grid.nt - 1}")
    return _Scheme(config).advance(state, np.asarray(noise_column, dtype=float), n)


def solve(config: SolverConfig, noise: NoiseField) -> SolutionPath:
    """Run the scheme from ``u0`` over the whole horizon."""
    g = config.grid
    if noise.grid != g:
        raise ValueError("noise was sampled on a different grid")
    scheme = _Scheme(config)
    u = np.empty((g.nx + 1, g.nt + 1))
    eta = np.zeros((g.nx + 1, g.nt))
    xim = np.zeros((g.nx + 1, g.nt))
    u[:, 0] = config.initial_state()
    for n in range(g.nt):
        u[:, n + 1], eta[:, n], xim[:, n] = scheme.advance(u[:, n], noise.xi[:, n], n)
    for arr in (u, eta, xim):
        arr.flags.writeable = False
    return SolutionPath(u, eta, xim, noise.seed, config)


def solve_many(config: SolverConfig, noises: Sequence[NoiseField], observe: tuple[int, int]):
    """March several paths together and return ``u`` at ``observe = (i, n)``.

    Values agree with :func:`solve` path by path; only the observed node is
    kept, which keeps large ensembles cheap in memory.
    """
    g = config.grid
    i0, n0 = observe
    scheme = _Scheme(config)
    xi = np.stack([nf.xi[:, :n0] for nf in noises], axis=-1)
    u = np.repeat(config.initial_state()[:, None], len(noises), axis=1)
    for n in range(n0):
        u, _, _ = scheme.advance(u, xi[:, n, :], n)
    return u[i0].copy()


def complementarity(path: SolutionPath, walls: WallPair | None = None) -> tuple[float, float]:
    """Discrete ``(int (u - h1) d eta, int (h2 - u) d xi)``."""
    walls = walls or path.config.walls
    h1, h2 = walls.on_grid(path.config.grid)
    after = path.u[:, 1:]
    lower = float(np.sum((after - h1[:, 1:]) * path.eta))
    upper = float(np.sum((h2[:, 1:] - after) * path.xi))
    return lower, upper


def max_violations(path: SolutionPath) -> tuple[float, float]:
    """Largest ``(h1 - u)^+`` and ``(u - h2)^+`` over the lattice."""
    h1, h2 = path.config.walls.on_grid(path.config.grid)
    return (float(np.maximum(h1 - path.u, 0.0).max()),
            float(np.maximum(path.u - h2, 0.0).max()))


@dataclass(frozen=True)
class SweepResult:
    """Nested (epsilon, delta) convergence table for one noise field.

    ``inner[e, k]`` is the sup distance between the solutions at
    ``deltas[k]`` and ``deltas[k + 1]`` for ``epsilons[e]``. The solution at
    the smallest delta stands in for the delta-limit; ``outer[e]`` and
    ``ordering[e]`` compare the proxies of ``epsilons[e]`` and
    ``epsilons[e + 1]`` (sup distance and min of the difference).
    """

    epsilons: tuple[float, ...]
    deltas: tuple[float, ...]
    seed: int
    inner: np.ndarray
    outer: np.ndarray
    ordering: np.ndarray
    lower_violation: np.ndarray
    upper_violation: np.ndarray
    sup_norm: np.ndarray
    lower_complementarity: np.ndarray
    upper_complementarity: np.ndarray

    @property
    def inner_monotone(self) -> np.ndarray:
        """Per epsilon: do the inner differences strictly decrease?"""
        if self.inner.shape[1] < 2:
            return np.ones(self.inner.shape[0], dtype=bool)
        return np.all(np.diff(self.inner, axis=1) < 0, axis=1)

    def rows(self) -> list[dict]:
        out = []
        for e, eps in enumerate(self.epsilons):
            for k, dlt in enumerate(self.deltas):
                out.append({
                    "epsilon": eps,
                    "delta": dlt,
                    "inner_diff": float(self.inner[e, k]) if k < len(self.deltas) - 1 else None,
                    "lower_violation": float(self.lower_violation[e, k]),
                    "upper_violation": float(self.upper_violation[e, k]),
                    "sup_norm": float(self.sup_norm[e, k]),
                    "lower_complementarity": float(self.lower_complementarity[e, k]),
                    "upper_complementarity": float(self.upper_complementarity[e, k]),
                })
        return out


def _strictly_decreasing(values: Sequence[float], name: str) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if not values or any(v <= 0 for v in values):
        raise ValueError(f"{name} must be a nonempty list of positive values")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly decreasing")
    return values


def sweep(config: SolverConfig, epsilons: Sequence[float], deltas: Sequence[float],
          seed: int, stream: int = 0) -> SweepResult:
    """Solve on the ``epsilons x deltas`` table with one shared noise field."""
    eps = _strictly_decreasing(epsilons, "epsilons")
    dls = _strictly_decreasing(deltas, "deltas")
    noise = sample_noise(config.grid, seed, stream)
    shape = (len(eps), len(dls))
    inner = np.zeros((len(eps), max(len(dls) - 1, 0)))
    lower_v, upper_v, sup = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    comp_l, comp_u = np.zeros(shape), np.zeros(shape)
    proxies = []
    for e, epsilon in enumerate(eps):
        prev = None
        for k, delta in enumerate(dls):
            path = solve(config.with_(epsilon=epsilon, delta=delta), noise)
            lower_v[e, k], upper_v[e, k] = max_violations(path)
            sup[e, k] = float(np.abs(path.u).max())
            comp_l[e, k], comp_u[e, k] = complementarity(path)
            if prev is not None:
                inner[e, k - 1] = float(np.abs(path.u - prev).max())
            prev = path.u
        proxies.append(prev)
    outer = np.array([np.abs(a - b).max() for a, b in zip(proxies, proxies[1:])])
    ordering = np.array([(a - b).min() for a, b in zip(proxies, proxies[1:])])
    return SweepResult(eps, dls, int(seed), inner, outer, ordering, lower_v, upper_v, sup,
                       comp_l, comp_u)
