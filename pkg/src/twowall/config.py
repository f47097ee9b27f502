"""Run configuration: a YAML document with fixed sections.

Unknown keys are rejected, missing keys take the defaults below, and the
normalized document (every default spelled out) round-trips through
:func:`dump_config` / :func:`parse_config` unchanged.
"""

from __future__ import annotations

from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, model_validator

from twowall.density import EnsembleConfig
from twowall.grid import Grid, make_grid
from twowall.solver import InitialProfile, SolverConfig
from twowall.walls import CoefficientSet, Rule, WallPair

__all__ = ["ConfigError", "RunConfig", "dump_config", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` holds one message per offending key."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=False, validate_default=True)


class GridSection(_Section):
    nx: int = Field(64, ge=4)
    nt: int = Field(512, ge=4)
    T: PositiveFloat = 0.25


class CatalogEntry(_Section):
    kind: str
    params: dict[str, float] = Field(default_factory=dict)


class WallsSection(CatalogEntry):
    kind: Literal["constant", "affine", "sinusoidal"] = "constant"


class RuleSection(CatalogEntry):
    kind: Literal["constant", "linear", "sine"] = "constant"


class CoefficientsSection(_Section):
    f: RuleSection = Field(default_factory=lambda: RuleSection(kind="constant", params={"value": 0.0}))
    sigma: RuleSection = Field(
        default_factory=lambda: RuleSection(kind="constant", params={"value": 1.0})
    )
    L: float = Field(1.0, ge=0)
    M_sigma: float = Field(1.0, ge=0)
    sigma_min: float = Field(0.0, ge=0)


class PenaltySection(_Section):
    variant: Literal["hard", "smooth"] = "hard"
    epsilon: PositiveFloat = 1e-2
    delta: PositiveFloat = 1e-2


class InitialSection(CatalogEntry):
    kind: Literal["zero", "sine"] = "zero"


class ObservationSection(_Section):
    x0: float = Field(0.5, gt=0, lt=1)
    t0: Optional[PositiveFloat] = None
    a: PositiveFloat = 0.05
    b: PositiveFloat = 0.05


class EnsembleSection(_Section):
    N: int = Field(1000, ge=100)
    base_seed: int = Field(0, ge=0)
    n_jobs: int = Field(1, ge=1)


class SweepSection(_Section):
    epsilons: list[PositiveFloat] = Field(default_factory=lambda: [1e-1, 5e-2])
    deltas: list[PositiveFloat] = Field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])

    @model_validator(mode="after")
    def _decreasing(self):
        for name in ("epsilons", "deltas"):
            values = getattr(self, name)
            if any(b >= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly decreasing")
        return self


class MalliavinSection(_Section):
    stride: int = Field(4, ge=1)


class OutputSection(_Section):
    directory: str = "out"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(_Section):
    grid: GridSection = Field(default_factory=GridSection)
    walls: WallsSection = Field(default_factory=WallsSection)
    coefficients: CoefficientsSection = Field(default_factory=CoefficientsSection)
    penalty: PenaltySection = Field(default_factory=PenaltySection)
    initial: InitialSection = Field(default_factory=InitialSection)
    observation: ObservationSection = Field(default_factory=ObservationSection)
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    malliavin: MalliavinSection = Field(default_factory=MalliavinSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _normalize(self):
        # Fill catalog parameters so the echo shows every numeric default.
        entries = [("walls", self.walls, WallPair), ("coefficients.f", self.coefficients.f, Rule),
                   ("coefficients.sigma", self.coefficients.sigma, Rule),
                   ("initial", self.initial, InitialProfile)]
        for name, entry, build in entries:
            try:
                entry.params = dict(build(entry.kind, entry.params).params)
            except ValueError as exc:
                raise ValueError(f"{name}.params: {exc}") from None
        if self.observation.t0 is None:
            self.observation.t0 = self.grid.T
        if self.observation.t0 > self.grid.T:
            raise ValueError("observation.t0 exceeds grid.T")
        return self

    # builders

    def make_grid(self) -> Grid:
        return make_grid(self.grid.nx, self.grid.nt, self.grid.T)

    def make_walls(self) -> WallPair:
        return WallPair(self.walls.kind, self.walls.params)

    def make_coefficients(self) -> CoefficientSet:
        c = self.coefficients
        return CoefficientSet(Rule(c.f.kind, c.f.params), Rule(c.sigma.kind, c.sigma.params),
                              L=c.L, M_sigma=c.M_sigma, sigma_min=c.sigma_min)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            grid=self.make_grid(),
            walls=self.make_walls(),
            coeffs=self.make_coefficients(),
            u0=InitialProfile(self.initial.kind, self.initial.params),
            epsilon=self.penalty.epsilon,
            delta=self.penalty.delta,
            penalty=self.penalty.variant,
        )

    def observation_indices(self) -> dict:
        """Snap ``(x0, t0)`` to the lattice and report how far it moved."""
        g = self.make_grid()
        i = g.x_index(self.observation.x0)
        n = g.t_index(self.observation.t0)
        return {
            "x0_requested": self.observation.x0,
            "t0_requested": self.observation.t0,
            "x0_index": i,
            "t0_index": n,
            "x0": float(g.x[i]),
            "t0": float(g.t[n]),
            "x0_snap_distance": abs(float(g.x[i]) - self.observation.x0),
            "t0_snap_distance": abs(float(g.t[n]) - self.observation.t0),
        }

    def ensemble_config(self) -> EnsembleConfig:
        obs = self.observation_indices()
        return EnsembleConfig(self.solver_config(), self.ensemble.N, self.ensemble.base_seed,
                              obs["x0_index"], obs["t0_index"], self.observation.a,
                              self.observation.b)

    def to_document(self) -> dict:
        return self.model_dump(mode="json")


def _format_errors(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            out.append(f"{loc}: unknown key")
        else:
            out.append(f"{loc}: {err['msg']}")
    return out


def parse_config(text: str | dict) -> RunConfig:
    """Parse and validate a YAML document (or an already-loaded mapping)."""
    if isinstance(text, str):
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError([f"<document>: not valid YAML ({exc})"]) from exc
    else:
        doc = text
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(["<root>: expected a mapping of sections"])
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_document(), sort_keys=False)
