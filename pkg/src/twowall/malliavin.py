"""Discrete first variation of the penalized scheme.

The derivative of the scheme with respect to one Brownian-sheet increment
``dW[j, m] = xi[j, m] sqrt(dx dt)`` obeys a linear recursion along the base
path. Writing ``L = I + dt A_h``,

    D^{m+1} = P_{m+1} L^{-1} (sigma(u_j^m) / dx) e_j
    D^{n+1} = P_{n+1} L^{-1} (E_n D^n),        n > m

with the explicit-step factor ``E_n = 1 + dt f'(u^n) + sigma'(u^n) xi_n sqrt(dt/dx)``
and the penalty factor ``P_{n+1} = 1 / (1 - dt (up' - down')(u^{n+1}))``.
Dropping ``P`` gives the dominating recursion. Running the recursion
backwards from a fixed node gives every source cell at once
(:func:`sensitivity_row`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from twowall.grid import NoiseField
from twowall.solver import PenaltyKind, SolutionPath, SolverConfig, diffuse, penalty_slopes
from twowall.walls import WallPair

__all__ = [
    "FirstVariationField",
    "LocalizedVariation",
    "SensitivityRow",
    "StoppingInfo",
    "dominating",
    "factorized",
    "first_variation",
    "localized_variation",
    "malliavin_norm",
    "sensitivity_row",
    "stopping_time",
    "variation_lower_bound",
]

# Hard-penalty nodes this close to a wall sit on the kink.
KINK_TOL = 1e-12


@dataclass(frozen=True)
class _Linearization:
    explicit: np.ndarray  # E_n on interior nodes, shape (nx-1, nt)
    penalty: np.ndarray  # P_n on interior nodes, shape (nx-1, nt+1); column 0 unused
    sigma: np.ndarray  # sigma(u^n) on interior nodes, shape (nx-1, nt)
    kinks: np.ndarray  # bool (nx+1, nt+1), Hard kink cells


def _linearize(path: SolutionPath, noise: NoiseField, config: SolverConfig | None) -> _Linearization:
    cfg = config or path.config
    g = cfg.grid
    if noise.grid != g or path.u.shape != (g.nx + 1, g.nt + 1):
        raise ValueError("path, noise and config must share one grid")
    x = g.x[1:-1, None]
    t = g.t[None, :]
    u = path.u[1:-1]
    before, after = u[:, :-1], u[:, 1:]
    c = cfg.coeffs
    explicit = (1.0 + g.dt * c.f.du(x, t[:, :-1], before)
                + c.sigma.du(x, t[:, :-1], before) * noise.xi * noise.forcing_scale)
    h1, h2 = cfg.walls.on_grid(g)
    dup, ddown = penalty_slopes(after, h1[1:-1, 1:], h2[1:-1, 1:], cfg.epsilon, cfg.delta,
                                cfg.penalty)
    penalty = np.ones((g.nx - 1, g.nt + 1))
    penalty[:, 1:] = 1.0 / (1.0 - g.dt * (dup - ddown))
    kinks = np.zeros((g.nx + 1, g.nt + 1), dtype=bool)
    if PenaltyKind(cfg.penalty) is PenaltyKind.HARD:
        near = (np.abs(path.u - h1) < KINK_TOL) | (np.abs(path.u - h2) < KINK_TOL)
        kinks[1:-1, 1:] = near[1:-1, 1:]
    sigma = c.sigma(x, t[:, :-1], before) * np.ones_like(before)
    return _Linearization(explicit, penalty, sigma, kinks)


def _forward(lin: _Linearization, config: SolverConfig, m: int, injected: np.ndarray,
             with_penalty: bool = True) -> np.ndarray:
    """Propagate a vector injected into the explicit substep of step ``m``."""
    g = config.grid
    out = np.zeros((g.nx + 1, g.nt + 1) + injected.shape[1:])
    rhs = injected
    for n in range(m, g.nt):
        if n > m:
            e = lin.explicit[:, n]
            rhs = (e if rhs.ndim == 1 else e[:, None]) * out[1:-1, n]
        nxt = diffuse(g, rhs)
        if with_penalty:
            p = lin.penalty[:, n + 1]
            nxt = (p if nxt.ndim == 1 else p[:, None]) * nxt
        out[1:-1, n + 1] = nxt
    return out


def _check_source(config: SolverConfig, source: tuple[int, int]) -> tuple[int, int]:
    j, m = (int(v) for v in source)
    g = config.grid
    if not (1 <= j <= g.nx - 1 and 0 <= m <= g.nt - 1):
        raise ValueError(f"source {(j, m)} outside interior cells 1..{g.nx - 1} x 0..{g.nt - 1}")
    return j, m


@dataclass(frozen=True)
class FirstVariationField:
    """``D[i, n]``: derivative of ``u[i, n]`` with respect to ``dW[j, m]``.

    ``kinks`` marks Hard-penalty nodes where the subgradient convention was
    used; ``sigma_source`` is ``sigma(u[j, m])``.
    """

    source: tuple[int, int]
    D: np.ndarray = field(repr=False)
    sigma_source: float
    kinks: np.ndarray = field(repr=False)
    path: SolutionPath = field(repr=False)

    @property
    def flagged(self) -> bool:
        j, m = self.source
        return bool(self.kinks[:, m + 1:].any())


def first_variation(path: SolutionPath, noise: NoiseField, source: tuple[int, int],
                    config: SolverConfig | None = None) -> FirstVariationField:
    """Exact derivative of the discrete scheme for one source cell."""
    cfg = config or path.config
    j, m = _check_source(cfg, source)
    lin = _linearize(path, noise, cfg)
    sig = float(lin.sigma[j - 1, m])
    seed = np.zeros(cfg.grid.nx - 1)
    seed[j - 1] = sig / cfg.grid.dx
    D = _forward(lin, cfg, m, seed)
    D.flags.writeable = False
    return FirstVariationField((j, m), D, sig, lin.kinks, path)


def factorized(field_: FirstVariationField, sigma_floor: float | None = None) -> np.ndarray:
    """``S = D / sigma(u(y, s))``."""
    floor = field_.path.config.coeffs.sigma_min if sigma_floor is None else sigma_floor
    if not abs(field_.sigma_source) > 0 or (floor > 0 and abs(field_.sigma_source) < floor):
        raise ValueError(
            f"sigma at the source is {field_.sigma_source:g}; S needs sigma >= sigma_min > 0"
        )
    return field_.D / field_.sigma_source


def dominating(path: SolutionPath, noise: NoiseField, source: tuple[int, int],
               config: SolverConfig | None = None) -> np.ndarray:
    """Recursion of ``S`` with every penalty-derivative term removed."""
    cfg = config or path.config
    j, m = _check_source(cfg, source)
    lin = _linearize(path, noise, cfg)
    seed = np.zeros(cfg.grid.nx - 1)
    seed[j - 1] = 1.0 / cfg.grid.dx
    return _forward(lin, cfg, m, seed, with_penalty=False)


@dataclass(frozen=True)
class SensitivityRow:
    """``values[j, m] = D_{j,m} u(x0, t0)`` for every source cell.

    With ``dominating=True`` the row holds the penalty-free ``S-hat``
    instead (no sigma factor).
    """

    x0_index: int
    t0_index: int
    values: np.ndarray = field(repr=False)
    dx: float
    dt: float
    dominating: bool = False


def sensitivity_row(path: SolutionPath, noise: NoiseField, x0_index: int, t0_index: int,
                    config: SolverConfig | None = None, dominating: bool = False) -> SensitivityRow:
    """All source derivatives of ``u(x0, t0)`` from one backward sweep."""
    cfg = config or path.config
    g = cfg.grid
    if not (1 <= x0_index <= g.nx - 1 and 1 <= t0_index <= g.nt):
        raise ValueError("observation must be an interior node with t0_index >= 1")
    lin = _linearize(path, noise, cfg)
    values = np.zeros((g.nx + 1, g.nt + 1))
    lam = np.zeros(g.nx - 1)
    lam[x0_index - 1] = 1.0
    for m in range(t0_index - 1, -1, -1):
        weighted = lam if dominating else lin.penalty[:, m + 1] * lam
        mu = diffuse(g, weighted)
        values[1:-1, m] = mu / g.dx if dominating else lin.sigma[:, m] * mu / g.dx
        lam = lin.explicit[:, m] * mu
    values.flags.writeable = False
    return SensitivityRow(x0_index, t0_index, values, g.dx, g.dt, dominating)


def _strided_cells(n_nodes: int, anchor: int, stride: int, lo: int) -> np.ndarray:
    idx = np.arange(anchor % stride, n_nodes, stride)
    return idx[idx >= lo]


def malliavin_norm(path: SolutionPath, noise: NoiseField, x0_index: int, t0_index: int,
                   stride: int = 1, config: SolverConfig | None = None) -> float:
    """Discrete squared norm ``sum D_{j,m} u(x0,t0)^2 dx dt`` over source cells.

    Sources are subsampled every ``stride`` cells in space and time and each
    kept cell is weighted by ``stride**2``. Kept cells sit at the midpoints of
    stride blocks: in space the blocks are centred on ``x0``, in time they
    are counted back from ``t0`` and represented by their middle step, which
    keeps the poorly resolved step just before ``t0`` from being
    overweighted.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    row = sensitivity_row(path, noise, x0_index, t0_index, config)
    return strided_square_sum(row.values, x0_index, t0_index, stride, row.dx, row.dt)


def strided_square_sum(values: np.ndarray, x0_index: int, t0_index: int, stride: int,
                       dx: float, dt: float) -> float:
    js = _strided_cells(values.shape[0] - 1, x0_index, stride, 1)
    ms = np.arange(t0_index - 1 - stride // 2, -1, -stride)
    block = values[np.ix_(js, ms)]
    return float(np.sum(block**2) * dx * dt * stride**2)


@dataclass(frozen=True)
class LocalizedVariation:
    """Linearized equation on ``[y, y~]`` with zero Dirichlet ends.

    ``w[i, n]`` is zero outside the subinterval and before ``s``.
    """

    y_index: int
    ytilde_index: int
    s_index: int
    x0_index: int
    w: np.ndarray = field(repr=False)


def ytilde_index(nx: int, y_index: int, x0_index: int) -> int:
    """Grid index of ``min(2 x0 - y, 1)``."""
    return min(2 * x0_index - y_index, nx)


def _sub_bands(config: SolverConfig, n_inner: int) -> np.ndarray:
    g = config.grid
    r = g.dt / g.dx**2
    ab = np.zeros((3, n_inner))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    return ab


def localized_variation(path: SolutionPath, noise: NoiseField, y_index: int, s_index: int,
                        x0_index: int, config: SolverConfig | None = None) -> LocalizedVariation:
    """Solve the frozen-coefficient linear equation on ``[y, y~] x [s, T]``.

    The state at ``s`` is ``sigma(u(., s))`` on the open subinterval. Like
    the first variation, the first step from ``s`` only diffuses that state;
    later steps apply the explicit factor ``E_n`` and then diffuse.
    """
    cfg = config or path.config
    g = cfg.grid
    if not 0 <= y_index < x0_index < g.nx:
        raise ValueError("need 0 <= y < x0 < 1 on the grid")
    if not 0 <= s_index < g.nt:
        raise ValueError("need 0 <= s < T on the grid")
    yt = ytilde_index(g.nx, y_index, x0_index)
    if yt - y_index < 4:
        raise ValueError(f"subinterval [{y_index}, {yt}] is shorter than 4 cells")
    lin = _linearize(path, noise, cfg)
    inner = slice(y_index + 1, yt)
    rows = slice(y_index, yt - 1)  # same nodes in interior-only arrays
    ab = _sub_bands(cfg, yt - y_index - 1)
    w = np.zeros((g.nx + 1, g.nt + 1))
    w[inner, s_index] = lin.sigma[rows, s_index]
    rhs = w[inner, s_index]
    for n in range(s_index, g.nt):
        if n > s_index:
            rhs = lin.explicit[rows, n] * w[inner, n]
        w[inner, n + 1] = solve_banded((1, 1), ab, rhs, check_finite=False)
    w.flags.writeable = False
    return LocalizedVariation(y_index, yt, s_index, x0_index, w)


@dataclass(frozen=True)
class StoppingInfo:
    """First lattice time at or after ``s`` when a wall margin over
    ``[y, y~]`` reaches its threshold. ``tau`` is ``inf`` if that never
    happens on the grid; the margins are NaN before ``s``."""

    tau: float
    tau_index: int | None
    in_B: bool
    lower_margin: np.ndarray = field(repr=False)
    upper_margin: np.ndarray = field(repr=False)

    def survives(self, t0_index: int) -> bool:
        """``tau > t0``."""
        return self.tau_index is None or self.tau_index > t0_index


def stopping_time(path: SolutionPath, walls: WallPair | None, y_index: int, s_index: int,
                  x0_index: int, a: float, b: float) -> StoppingInfo:
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    cfg = path.config
    g = cfg.grid
    walls = walls or cfg.walls
    yt = ytilde_index(g.nx, y_index, x0_index)
    h1, h2 = walls.on_grid(g)
    seg = slice(y_index, yt + 1)
    lower = np.full(g.nt + 1, np.nan)
    upper = np.full(g.nt + 1, np.nan)
    lower[s_index:] = (path.u[seg, s_index:] - h1[seg, s_index:]).min(axis=0)
    upper[s_index:] = (h2[seg, s_index:] - path.u[seg, s_index:]).min(axis=0)
    hit = (lower[s_index:] <= a / 2) | (upper[s_index:] <= b / 2)
    in_B = not bool(hit[0])
    if hit.any():
        k = s_index + int(np.argmax(hit))
        return StoppingInfo(float(g.t[k]), k, in_B, lower, upper)
    return StoppingInfo(float("inf"), None, in_B, lower, upper)


def variation_lower_bound(row: SensitivityRow, localized: LocalizedVariation,
                          stopping: StoppingInfo, tolerance: float | None = None):
    """Compare ``v = sum_{z in [y, y~]} D_{z,s} u(x0, t0) dx`` with
    ``w(x0, t0) 1{tau > t0}``.

    Returns ``(v, bound, holds)`` where ``holds`` is ``v >= bound - tolerance``
    (default tolerance ``1e-3 * max|w|``).
    """
    if row.dominating:
        raise ValueError("lower bound needs the penalized sensitivity row")
    if row.x0_index != localized.x0_index:
        raise ValueError("row and localized variation use different x0")
    t0 = row.t0_index
    s = localized.s_index
    if s >= t0:
        raise ValueError("s must precede t0")
    seg = slice(localized.y_index, localized.ytilde_index + 1)
    v = float(np.sum(row.values[seg, s]) * row.dx)
    bound = float(localized.w[localized.x0_index, t0]) if stopping.survives(t0) else 0.0
    if tolerance is None:
        tolerance = 1e-3 * float(np.abs(localized.w).max())
    return v, bound, bool(v >= bound - tolerance)
