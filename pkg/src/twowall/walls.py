"""Reflecting walls, drift/diffusion coefficients and hypothesis checks.

Walls and coefficients come from a small catalog of closed-form rules so
that time and space derivatives of the walls and u-derivatives of the
coefficients are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.integrate import trapezoid

from twowall.grid import Grid

__all__ = [
    "CheckResult",
    "CoefficientSet",
    "HypothesisReport",
    "Rule",
    "WallPair",
    "validate_coefficients",
    "validate_walls",
]

WALL_KINDS: dict[str, dict[str, float]] = {
    "constant": {"lower": -1.0, "upper": 1.0},
    "affine": {"lower": -1.0, "lower_slope": 0.0, "upper": 1.0, "upper_slope": 0.0},
    "sinusoidal": {
        "lower": -1.0,
        "lower_amplitude": 0.0,
        "upper": 1.0,
        "upper_amplitude": 0.0,
        "mode": 1.0,
    },
}

RULE_KINDS: dict[str, dict[str, float]] = {
    "constant": {"value": 0.0},
    "linear": {"intercept": 0.0, "slope": 0.0},
    "sine": {"offset": 0.0, "amplitude": 0.0, "frequency": 1.0},
}

# Tolerance for the time-monotonicity of the gap h2 - h1.
H4_TOLERANCE = 1e-12


def _merge_params(kind: str, params: Mapping[str, Any] | None, catalog) -> dict[str, float]:
    if kind not in catalog:
        raise ValueError(f"unknown kind {kind!r}; expected one of {sorted(catalog)}")
    merged = dict(catalog[kind])
    for key, value in (params or {}).items():
        if key not in merged:
            raise ValueError(f"unknown parameter {key!r} for kind {kind!r}")
        merged[key] = float(value)
    return merged


@dataclass(frozen=True)
class WallPair:
    """Lower wall h1 and upper wall h2 from the catalog.

    * ``constant``: ``h1 = lower``, ``h2 = upper``.
    * ``affine``: ``h1 = lower + lower_slope * t`` and likewise for h2.
    * ``sinusoidal``: ``h1 = lower + lower_amplitude * sin(mode * pi * x)``
      and likewise for h2.
    """

    kind: str = "constant"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", _merge_params(self.kind, self.params, WALL_KINDS))

    @classmethod
    def constant(cls, lower: float, upper: float) -> WallPair:
        return cls("constant", {"lower": lower, "upper": upper})

    def _eval(self, which: str, x, t):
        p = self.params
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        base = p[which]
        if self.kind == "constant":
            return np.full(x.shape, base)
        if self.kind == "affine":
            return base + p[f"{which}_slope"] * t
        return base + p[f"{which}_amplitude"] * np.sin(p["mode"] * np.pi * x)

    def h1(self, x, t):
        return self._eval("lower", x, t)

    def h2(self, x, t):
        return self._eval("upper", x, t)

    def dt(self, which: str, x, t):
        """Closed-form time derivative of ``lower`` or ``upper`` wall."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if self.kind == "affine":
            return np.full(x.shape, self.params[f"{which}_slope"])
        return np.zeros(x.shape)

    def dxx(self, which: str, x, t):
        """Closed-form second space derivative of ``lower`` or ``upper`` wall."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if self.kind == "sinusoidal":
            k = self.params["mode"] * np.pi
            return -k**2 * self.params[f"{which}_amplitude"] * np.sin(k * x)
        return np.zeros(x.shape)

    def on_grid(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        """Lattice values, each of shape ``(nx + 1, nt + 1)``."""
        X, Tm = np.meshgrid(grid.x, grid.t, indexing="ij")
        return self.h1(X, Tm), self.h2(X, Tm)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class Rule:
    """Coefficient rule ``(x, t, u) -> value`` with its exact u-derivative.

    Catalog kinds: ``constant`` (value), ``linear`` (intercept + slope*u),
    ``sine`` (offset + amplitude*sin(frequency*u)).
    """

    kind: str = "constant"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", _merge_params(self.kind, self.params, RULE_KINDS))

    @classmethod
    def constant(cls, value: float) -> Rule:
        return cls("constant", {"value": value})

    @classmethod
    def sine(cls, offset: float, amplitude: float, frequency: float = 1.0) -> Rule:
        return cls("sine", {"offset": offset, "amplitude": amplitude, "frequency": frequency})

    def __call__(self, x, t, u):
        p = self.params
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.full(u.shape, p["value"])
        if self.kind == "linear":
            return p["intercept"] + p["slope"] * u
        return p["offset"] + p["amplitude"] * np.sin(p["frequency"] * u)

    def du(self, x, t, u):
        p = self.params
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.zeros(u.shape)
        if self.kind == "linear":
            return np.full(u.shape, p["slope"])
        k = p["frequency"]
        return p["amplitude"] * k * np.cos(k * u)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (
            self.kind == "linear" and self.params["slope"] == 0.0
        ) or (self.kind == "sine" and self.params["amplitude"] == 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class CoefficientSet:
    """Drift ``f`` and diffusion ``sigma`` with their declared bounds."""

    f: Rule = field(default_factory=lambda: Rule.constant(0.0))
    sigma: Rule = field(default_factory=lambda: Rule.constant(1.0))
    L: float = 1.0
    M_sigma: float = 1.0
    sigma_min: float = 0.0

    @classmethod
    def constant(cls, sigma: float, f: float = 0.0) -> CoefficientSet:
        return cls(Rule.constant(f), Rule.constant(sigma), L=0.0, M_sigma=abs(sigma),
                   sigma_min=max(sigma, 0.0))


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one hypothesis.

    ``passed`` is ``None`` when the hypothesis was not checked. ``margin`` is
    the worst slack found (negative means violated) and ``where`` names the
    offending lattice node or sample.
    """

    passed: bool | None
    margin: float = float("nan")
    where: tuple | None = None
    note: str = ""

    def to_dict(self) -> dict:
        status = "not checked" if self.passed is None else ("pass" if self.passed else "fail")
        return {
            "status": status,
            "margin": None if np.isnan(self.margin) else float(self.margin),
            "where": None if self.where is None else list(self.where),
            "note": self.note,
        }


@dataclass(frozen=True)
class HypothesisReport:
    checks: Mapping[str, CheckResult]
    estimates: Mapping[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        """True when no checked hypothesis failed."""
        return all(c.passed is not False for c in self.checks.values())

    def __getitem__(self, name: str) -> CheckResult:
        return self.checks[name]

    def failures(self) -> list[str]:
        return [name for name, c in self.checks.items() if c.passed is False]

    def merged(self, other: HypothesisReport) -> HypothesisReport:
        return HypothesisReport({**self.checks, **other.checks},
                                {**self.estimates, **other.estimates})

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "estimates": {k: float(v) for k, v in self.estimates.items()},
        }


def _worst(values: np.ndarray, offset: tuple[int, int] = (0, 0)) -> tuple[float, tuple]:
    idx = np.unravel_index(np.argmin(values), values.shape)
    return float(values[idx]), tuple(int(i + o) for i, o in zip(idx, offset))


def validate_walls(walls: WallPair, grid: Grid) -> HypothesisReport:
    """Check the standing wall hypotheses on the lattice.

    Nodes are reported as ``(i, n)``. H1 is strict separation on interior
    nodes, H4 asks forward time differences of the gap to be >= -1e-12, and
    H2/H3 use the closed-form derivatives of the catalog walls.
    """
    h1, h2 = walls.on_grid(grid)
    checks: dict[str, CheckResult] = {}

    gap = (h2 - h1)[1:-1, :]
    margin, where = _worst(gap, (1, 0))
    checks["H1"] = CheckResult(margin > 0, margin, where)

    bnd = np.stack([-h1[0], -h1[-1], h2[0], h2[-1]])
    margin, (row, n) = _worst(bnd)
    side = ("h1(0,t)", "h1(1,t)", "h2(0,t)", "h2(1,t)")[row]
    checks["boundary"] = CheckResult(margin >= 0, margin, (0 if row % 2 == 0 else grid.nx, n),
                                     note=f"worst: {side}")

    X, Tm = np.meshgrid(grid.x, grid.t, indexing="ij")
    h2_forcing = [walls.dt(w, X, Tm) + walls.dxx(w, X, Tm) for w in ("lower", "upper")]
    finite = all(np.all(np.isfinite(a)) for a in h2_forcing)
    l2 = max(float(np.sqrt(trapezoid(trapezoid(a**2, dx=grid.dx, axis=0), dx=grid.dt)))
             for a in h2_forcing)
    checks["H2"] = CheckResult(finite, l2 if finite else float("nan"),
                               note="closed-form dt + dxx, L2 norm over Q_T")

    edge_rate = np.concatenate([
        np.abs(walls.dt(w, np.array([0.0, 1.0])[:, None], grid.t[None, :])).ravel()
        for w in ("lower", "upper")
    ])
    worst_rate = float(edge_rate.max())
    checks["H3"] = CheckResult(worst_rate == 0.0, -worst_rate,
                               note="flagged only; walls violating H3 are still simulated")

    if grid.nt >= 1:
        dgap = np.diff(h2 - h1, axis=1)
        margin, where = _worst(dgap)
        checks["H4"] = CheckResult(margin >= -H4_TOLERANCE, margin, where)
    return HypothesisReport(checks)


def validate_coefficients(coeffs: CoefficientSet, box: tuple[float, float] = (-1.0, 1.0),
                          n_points: int = 1024) -> HypothesisReport:
    """Check the coefficient hypotheses on an ``n_points`` ladder over ``box``.

    ``|sigma| <= M_sigma``, ``|f'| <= L``, ``|sigma'| <= L`` and, when
    ``sigma_min > 0``, ``sigma >= sigma_min``. The ladder maxima are
    returned in ``estimates``.
    """
    lo, hi = box
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError(f"box must be a finite interval, got {box}")
    u = np.linspace(lo, hi, n_points)
    sig = coeffs.sigma(0.0, 0.0, u)
    dsig = np.abs(coeffs.sigma.du(0.0, 0.0, u))
    df = np.abs(coeffs.f.du(0.0, 0.0, u))
    slack = 1e-12 * (1.0 + max(coeffs.L, coeffs.M_sigma))

    def bound(values, limit):
        k = int(np.argmax(values))
        return CheckResult(bool(values[k] <= limit + slack), float(limit - values[k]),
                           (float(u[k]),))

    checks = {
        "F_sigma_bounded": bound(np.abs(sig), coeffs.M_sigma),
        "F_f_lipschitz": bound(df, coeffs.L),
        "F_sigma_lipschitz": bound(dsig, coeffs.L),
    }
    parts = list(checks.values())
    checks["F"] = CheckResult(all(c.passed for c in parts), min(c.margin for c in parts),
                              note="all of F_sigma_bounded, F_f_lipschitz, F_sigma_lipschitz")
    if coeffs.sigma_min > 0:
        k = int(np.argmin(sig))
        checks["sigma_positive"] = CheckResult(bool(sig[k] >= coeffs.sigma_min - slack),
                                               float(sig[k] - coeffs.sigma_min), (float(u[k]),))
    else:
        checks["sigma_positive"] = CheckResult(None, note="sigma_min is 0")
    estimates = {
        "sigma_sup": float(np.abs(sig).max()),
        "sigma_inf": float(sig.min()),
        "f_lipschitz": float(df.max()),
        "sigma_lipschitz": float(dsig.max()),
    }
    return HypothesisReport(checks, estimates)
