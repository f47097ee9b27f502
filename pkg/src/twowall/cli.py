"""Command-line front end.

Every subcommand reads one YAML config, writes its artifacts into
``output.directory`` and finishes with ``report.json``: the normalized
config echo, the hypothesis report, headline statistics, a manifest of the
artifacts with SHA-256 checksums, and timings. Artifacts are pure
functions of the config; only ``report.json`` carries wall-clock times.

Exit codes: 0 success, 1 runtime failure, 2 bad config or arguments,
3 ``validate`` found a failing hypothesis.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from twowall import io
from twowall.config import ConfigError, RunConfig, dump_config, load_config
from twowall.density import atom_diagnostic, default_widths, kde, run_ensemble
from twowall.grid import sample_noise
from twowall.malliavin import dominating, factorized, first_variation, malliavin_norm
from twowall.solver import complementarity, max_violations, solve, sweep
from twowall.walls import HypothesisReport, validate_coefficients, validate_walls

log = logging.getLogger("twowall")

SUBCOMMANDS = ("validate", "solve", "sweep", "malliavin", "density")
# Failing these does not block a run.
ADVISORY_CHECKS = {"H3", "sigma_positive"}


class RunError(RuntimeError):
    pass


def hypothesis_report(config: RunConfig) -> HypothesisReport:
    grid = config.make_grid()
    walls = config.make_walls()
    h1, h2 = walls.on_grid(grid)
    report = validate_walls(walls, grid)
    box = (float(h1.min()), float(h2.max()))
    if not box[0] < box[1]:
        box = (box[0], box[0] + 1.0)
    return report.merged(validate_coefficients(config.make_coefficients(), box))


def _require_valid(report: HypothesisReport):
    blocking = [name for name in report.failures() if name not in ADVISORY_CHECKS]
    if blocking:
        raise RunError(f"hypotheses failed: {', '.join(blocking)} (run `validate` for details)")


def _csv(config: RunConfig) -> bool:
    return "csv" in config.output.formats


def _json(config: RunConfig) -> bool:
    return "json" in config.output.formats


def _do_validate(config, out, ctx):
    report = ctx["hypotheses"]
    files = []
    if _json(config):
        files.append(io.write_json(out / "hypotheses.json", report.to_dict()))
    return {"ok": report.ok, "failures": report.failures()}, files


def _do_solve(config, out, ctx):
    cfg = config.solver_config()
    seed = ctx["seed"]
    path = solve(cfg, sample_noise(cfg.grid, seed))
    lower, upper = complementarity(path)
    vlow, vup = max_violations(path)
    headline = {
        "seed": seed,
        "sup_norm": float(np.abs(path.u).max()),
        "max_lower_violation": vlow,
        "max_upper_violation": vup,
        "complementarity_lower": lower,
        "complementarity_upper": upper,
        "eta_total": float(path.eta.sum()),
        "xi_total": float(path.xi.sum()),
    }
    files = []
    if _csv(config):
        files.append(io.write_field(out / "u.csv", cfg.grid, path.u, "u", "field"))
        files.append(io.write_field(out / "eta.csv", cfg.grid, path.eta, "eta",
                                    "field*length*time", cells=True))
        files.append(io.write_field(out / "xi.csv", cfg.grid, path.xi, "xi",
                                    "field*length*time", cells=True))
    if _json(config):
        files.append(io.write_json(out / "solve_summary.json", headline))
    return headline, files


def _do_sweep(config, out, ctx):
    cfg = config.solver_config()
    result = sweep(cfg, config.sweep.epsilons, config.sweep.deltas, ctx["seed"])
    headline = {
        "seed": ctx["seed"],
        "epsilons": list(result.epsilons),
        "deltas": list(result.deltas),
        "inner_differences": result.inner,
        "inner_monotone": result.inner_monotone,
        "outer_differences": result.outer,
        "ordering_min": result.ordering,
    }
    files = []
    if _csv(config):
        rows = result.rows()
        keys = ["epsilon", "delta", "inner_diff", "lower_violation", "upper_violation",
                "sup_norm", "lower_complementarity", "upper_complementarity"]
        cols = [np.array([np.nan if r[k] is None else r[k] for r in rows]) for k in keys]
        header = ["epsilon[1/rate]", "delta[1/rate]", "inner_sup_diff[field]",
                  "max_lower_violation[field]", "max_upper_violation[field]", "sup_norm[field]",
                  "complementarity_lower[field^2*length*time]",
                  "complementarity_upper[field^2*length*time]"]
        files.append(io.write_table(out / "sweep.csv", header, cols))
    if _json(config):
        files.append(io.write_json(out / "sweep_summary.json", headline))
    return headline, files


def _do_malliavin(config, out, ctx):
    cfg = config.solver_config()
    seed = ctx["seed"]
    source = ctx["source"]
    if source is None:
        raise RunError("malliavin needs --source j,m")
    noise = sample_noise(cfg.grid, seed)
    path = solve(cfg, noise)
    fv = first_variation(path, noise, source)
    s_hat = dominating(path, noise, source)
    obs = config.observation_indices()
    headline = {
        "seed": seed,
        "source": list(fv.source),
        "sigma_source": fv.sigma_source,
        "min_D": float(fv.D.min()),
        "max_D": float(fv.D.max()),
        "kink_flagged": fv.flagged,
        "stride": config.malliavin.stride,
        "norm_at_observation": malliavin_norm(path, noise, obs["x0_index"], obs["t0_index"],
                                              config.malliavin.stride),
    }
    if fv.sigma_source > 0:
        headline["max_S_minus_S_hat"] = float((factorized(fv, 0.0) - s_hat).max())
    files = []
    j, m = fv.source
    if _csv(config):
        files.append(io.write_field(out / f"variation_j{j}_m{m}.csv", cfg.grid, fv.D, "D",
                                    "field/(field*length^0.5*time^0.5)"))
        files.append(io.write_field(out / f"dominating_j{j}_m{m}.csv", cfg.grid, s_hat, "S_hat",
                                    "1/length"))
    if _json(config):
        files.append(io.write_json(out / "malliavin_summary.json", headline))
    return headline, files


def _do_density(config, out, ctx):
    ens = config.ensemble_config()
    samples = run_ensemble(ens, n_jobs=config.ensemble.n_jobs)
    h1, h2 = ens.walls_at_observation()
    widths = default_widths(h2 - h1)
    masses = atom_diagnostic(samples, widths)
    headline = {
        "N": samples.N,
        "base_seed": ens.base_seed,
        "observation": {"x0": ens.x0, "t0": ens.t0},
        "walls_at_observation": [h1, h2],
        "event_frequency": samples.event_frequency,
        "atom_widths": widths,
        "atom_masses": masses,
        "sample_mean": float(samples.values.mean()),
        "sample_std": float(samples.values.std(ddof=1)),
    }
    try:
        est = kde(samples)
    except ValueError as exc:
        est = None
        headline["kde_error"] = str(exc)
    if est is not None:
        headline.update({
            "bandwidth": est.bandwidth,
            "kde_total_mass": est.total_mass,
            "kde_min_on_interior": float(est.density.min()),
            "kde_interval": [float(est.points[0]), float(est.points[-1])],
        })
    files = []
    if _csv(config):
        col = f"u(x0={ens.x0:.6f};t0={ens.t0:.6f})[field]"
        files.append(io.write_table(out / "samples.csv", [col], [samples.values]))
        if est is not None:
            files.append(io.write_table(out / "density.csv", ["u[field]", "density[1/field]"],
                                        [est.points, est.density]))
    if _json(config):
        files.append(io.write_json(out / "summary.json", headline))
    return headline, files


_HANDLERS = {
    "validate": _do_validate,
    "solve": _do_solve,
    "sweep": _do_sweep,
    "malliavin": _do_malliavin,
    "density": _do_density,
}


def run(subcommand: str, config: RunConfig, seed: int | None = None,
        source: tuple[int, int] | None = None, out_dir: str | Path | None = None) -> dict:
    """Dispatch ``subcommand`` and return the run report (also written)."""
    if subcommand not in _HANDLERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    started = time.perf_counter()
    out = Path(out_dir if out_dir is not None else config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    report = hypothesis_report(config)
    if subcommand != "validate":
        _require_valid(report)
    seed = config.ensemble.base_seed if seed is None else int(seed)
    ctx = {"seed": seed, "source": source, "hypotheses": report}
    try:
        headline, files = _HANDLERS[subcommand](config, out, ctx)
    except (RunError, ConfigError):
        raise
    except Exception as exc:
        where = f"seed={seed}" + (f", source={source}" if source else "")
        raise RunError(f"{subcommand} failed ({where}): {exc}") from exc
    elapsed = time.perf_counter() - started
    doc = {
        "subcommand": subcommand,
        "config": config.to_document(),
        "observation": config.observation_indices(),
        "hypotheses": report.to_dict(),
        "headline": headline,
        "manifest": [io.manifest_entry(f, out) for f in files],
        "timings": {"wall_seconds": elapsed},
    }
    io.write_json(out / "report.json", doc)
    return io._clean({"schema_version": io.SCHEMA_VERSION, **doc})


def _parse_source(text: str) -> tuple[int, int]:
    try:
        j, m = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("--source expects two integers 'j,m'") from None
    return j, m


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twowall", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="override output.directory")
        if name in ("solve", "sweep", "malliavin"):
            p.add_argument("--seed", type=int, default=None,
                           help="noise seed (default: ensemble.base_seed)")
        if name == "malliavin":
            p.add_argument("--source", type=_parse_source, required=True,
                           help="source cell as grid indices j,m")
    sub.add_parser("defaults", help="print the normalized default config")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "defaults":
        sys.stdout.write(dump_config(RunConfig()))
        return 0
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(args.command, config, seed=getattr(args, "seed", None),
                     source=getattr(args, "source", None), out_dir=args.out)
    except (RunError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out or config.output.directory)
    print(f"{args.command}: wrote {len(report['manifest'])} artifact(s) and report.json to {out}")
    for entry in report["manifest"]:
        print(f"  {entry['path']}  sha256={entry['sha256'][:16]}")
    if args.command == "validate" and not report["headline"]["ok"]:
        print("hypotheses failed: " + ", ".join(report["headline"]["failures"]), file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
