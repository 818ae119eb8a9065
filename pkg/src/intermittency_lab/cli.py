"""Command-line front end.

Subcommands: orbit, density, renewal, bc.  Configuration comes from a
JSON file (--config) with strict unknown-key rejection, overridden by
flags.  Every run writes a manifest (config + seed + version) that is
sufficient to reproduce it byte-exactly at any worker count.

Exit codes: 0 success, 2 configuration error, 3 numeric error.
"""

from __future__ import annotations

import csv
import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, bc_harness, kernels, measure, renewal_ops
from .map_core import (
    DomainError,
    MapParams,
    NumericError,
    build_return_structure,
)

ENV_WORKERS = "INTERMITTENCY_LAB_WORKERS"


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


_COMMON_DEFAULTS = {
    "alpha": 0.5,
    "seed": 1,
    "workers": 1,
    "mesh_size": 2**14,
    "y_mesh_size": 2**12,
    "n_max": 4096,
    "grading": None,  # None -> measure.default_grading(alpha)
    "density_tol": 1e-12,
}

_COMMAND_DEFAULTS = {
    "orbit": {"x0": 0.6, "steps": 10**5, "stride": 1},
    "density": {},
    "renewal": {"kac_terms": 4096, "c_n_max": 512, "residual_n_max": 256},
    "bc": {
        "schedule": {"kind": "anchored"},
        "orbits": 200,
        "horizon": 10**6,
        "burn_in": 10**4,
        "checkpoints": None,
        "band": 256,
        "criterion_horizons": [500, 1000, 2000],
        "use_pullback": True,
        "run_criterion": False,
    },
}


def _load_config(command: str, config_path, overrides: dict) -> dict:
    allowed = dict(_COMMON_DEFAULTS)
    allowed.update(_COMMAND_DEFAULTS[command])
    resolved = dict(allowed)
    if config_path is not None:
        try:
            with open(config_path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        for key, value in raw.items():
            if key not in allowed:
                raise ConfigError(f"unknown config key {key!r} for command {command!r}")
            resolved[key] = value
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    if not (0.0 < float(resolved["alpha"]) < 1.0):
        raise ConfigError(f"alpha must lie in (0, 1), got {resolved['alpha']}")
    for key in ("mesh_size", "y_mesh_size", "n_max", "workers"):
        if int(resolved[key]) < 1:
            raise ConfigError(f"{key} must be a positive count")
    if resolved["grading"] is None:
        resolved["grading"] = measure.default_grading(float(resolved["alpha"]))
    return resolved


def _set_workers(config: dict) -> None:
    workers = int(config["workers"])
    if workers == _COMMON_DEFAULTS["workers"] and ENV_WORKERS in os.environ:
        try:
            workers = int(os.environ[ENV_WORKERS])
        except ValueError as exc:
            raise ConfigError(f"bad {ENV_WORKERS} value") from exc
        config["workers"] = workers
    import numba

    # results are worker-count independent, so clamping is safe
    numba.set_num_threads(min(max(1, workers), numba.config.NUMBA_NUM_THREADS))


def _write_manifest(out_dir: Path, command: str, config: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": int(config["seed"]),
        "config": config,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare(command: str, config_path, out, overrides: dict) -> tuple[dict, Path]:
    config = _load_config(command, config_path, overrides)
    _set_workers(config)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(out_dir, command, config)
    return config, out_dir


def _build_density(config: dict):
    p = MapParams(float(config["alpha"]))
    mesh = measure.GradedMesh.build(int(config["mesh_size"]), float(config["grading"]))
    ulam = measure.build_ulam(p, mesh)
    density = measure.stationary_density(
        ulam, mesh, tol=float(config["density_tol"])
    )
    return p, mesh, ulam, density


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, DomainError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except NumericError as exc:
            click.echo(f"numeric error: {exc}", err=True)
            sys.exit(3)
        except OSError as exc:
            click.echo(f"io error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="JSON config file (strict keys).")(fn)
    fn = click.option("--seed", type=int, default=None, help="RNG seed override.")(fn)
    fn = click.option("--alpha", type=float, default=None, help="Map parameter override.")(fn)
    fn = click.option("--out", type=click.Path(), default="out", show_default=True,
                      help="Output directory.")(fn)
    fn = click.option("--workers", type=int, default=None,
                      help=f"Worker threads (fallback: ${ENV_WORKERS}).")(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Intermittent-map numerics: orbits, invariant density, renewal operators,
    and Borel-Cantelli hit statistics."""


@main.command()
@_common_options
@click.option("--x0", type=float, default=None, help="Orbit start in (0, 1].")
@click.option("--steps", type=int, default=None)
@click.option("--stride", type=int, default=None)
@_handle_errors
def orbit(config_path, seed, alpha, out, workers, x0, steps, stride):
    """Stream orbit samples of the map to CSV."""
    config, out_dir = _prepare(
        "orbit", config_path, out,
        {"seed": seed, "alpha": alpha, "workers": workers,
         "x0": x0, "steps": steps, "stride": stride},
    )
    p = MapParams(float(config["alpha"]))
    start = float(config["x0"])
    if not (0.0 < start <= 1.0):
        raise ConfigError(f"x0 must lie in (0, 1], got {start}")
    samples = kernels.orbit_samples(
        start, p.alpha, int(config["steps"]), int(config["stride"])
    )
    path = out_dir / "orbit.csv"
    stride_n = int(config["stride"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "x"])
        for i, x in enumerate(samples):
            writer.writerow([str((i + 1) * stride_n), format(x, ".17g")])
    click.echo(f"orbit: wrote {len(samples)} samples to {path}")


@main.command()
@_common_options
@_handle_errors
def density(config_path, seed, alpha, out, workers):
    """Invariant density via Ulam discretization; CSV + JSON summary."""
    config, out_dir = _prepare(
        "density", config_path, out,
        {"seed": seed, "alpha": alpha, "workers": workers},
    )
    p, mesh, ulam, dens = _build_density(config)
    dens.to_csv(out_dir / "density.csv")
    summary = {
        "alpha": p.alpha,
        "mesh_size": mesh.size,
        "grading": mesh.grading,
        "mass": dens.mass,
        "mu_Y": dens.measure(0.5, 1.0),
    }
    with open(out_dir / "density_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"density: mu(Y) = {summary['mu_Y']:.6f}, wrote {out_dir}/density.csv")


@main.command()
@_common_options
@_handle_errors
def renewal(config_path, seed, alpha, out, workers):
    """Renewal diagnostics: Kac partial sums, gamma, c_n decay; CSV + JSON."""
    config, out_dir = _prepare(
        "renewal", config_path, out,
        {"seed": seed, "alpha": alpha, "workers": workers},
    )
    p, mesh, ulam, dens = _build_density(config)
    kac_terms = int(config["kac_terms"])
    n_max = max(int(config["n_max"]), kac_terms)
    frs = build_return_structure(p, n_max)
    diag = renewal_ops.kac_check(frs, dens, kac_terms)

    engine = renewal_ops.CorrelationEngine(
        p, mesh, ulam, dens, y_mesh_size=int(config["y_mesh_size"])
    )
    c_n_max = int(config["c_n_max"])
    c_hat = engine.estimate_cn(c_n_max)
    slope, half, fit_ns = engine.fit_decay_exponent(c_hat)
    diag.c_n_estimates = c_hat
    diag.c_ns = np.arange(1, c_n_max + 1, dtype=np.int64)
    diag.decay_exponent = slope
    diag.decay_exponent_halfwidth = half
    diag.fit_window = (int(fit_ns[0]), int(fit_ns[-1]))

    res_top = int(config["residual_n_max"])
    res_ns = np.unique(np.round(16 * (res_top / 16) ** np.linspace(0, 1, 9)).astype(int))
    pairs = _residual_pairs()
    stats = engine.residual_bound_stats(pairs, res_ns, c_hat)

    renewal_ops.diagnostics_csv(
        out_dir / "renewal.csv", frs, dens, diag, stats, res_ns
    )
    diag.to_json(out_dir / "renewal_summary.json")
    click.echo(
        f"renewal: gamma_hat = {diag.gamma_hat:.6f}, "
        f"kac total = {diag.kac_partial_sums[-1]:.4f}, "
        f"decay exponent = {slope if slope is None else format(slope, '.3f')}"
    )


def _residual_pairs():
    from .map_core import Interval

    anchors = [(0.55, 0.65), (0.6, 0.8), (0.7, 0.75), (0.8, 0.95), (0.52, 0.98)]
    pairs = []
    for a_lo, a_hi in anchors:
        a = Interval(a_lo, a_hi)
        pairs.append((a, Interval(0.6, 0.9)))
        pairs.append((a, Interval(0.75, 1.0)))
    return pairs


@main.command()
@_common_options
@click.option("--kind", type=click.Choice(["anchored", "moving", "nested", "kim_type"]),
              default=None, help="Schedule kind override.")
@click.option("--orbits", type=int, default=None)
@click.option("--horizon", type=int, default=None)
@click.option("--criterion/--no-criterion", "run_criterion", default=None,
              help="Also compute the pairwise criterion ratio table.")
@_handle_errors
def bc(config_path, seed, alpha, out, workers, kind, orbits, horizon, run_criterion):
    """Borel-Cantelli experiment: hit counts vs expected sums, criterion ratio."""
    config, out_dir = _prepare(
        "bc", config_path, out,
        {"seed": seed, "alpha": alpha, "workers": workers, "orbits": orbits,
         "horizon": horizon, "run_criterion": run_criterion},
    )
    if kind is not None:
        config["schedule"] = dict(config["schedule"], kind=kind)
        _write_manifest(out_dir, "bc", config)
    p = MapParams(float(config["alpha"]))
    sched_spec = dict(config["schedule"])
    sched_kind = sched_spec.pop("kind", None)
    if sched_kind is None:
        raise ConfigError("schedule config needs a 'kind'")
    if sched_kind == "kim_type":
        sched_spec.setdefault("alpha", p.alpha)
    schedule = bc_harness.make_schedule(sched_kind, **sched_spec)

    _, mesh, ulam, dens = _build_density(config)
    report = bc_harness.run_experiment(
        schedule,
        p,
        dens,
        n_orbits=int(config["orbits"]),
        horizon=int(config["horizon"]),
        seed=int(config["seed"]),
        burn_in=int(config["burn_in"]),
        checkpoints=config["checkpoints"],
    )
    report.to_csv(out_dir / "hits.csv")
    line = (
        f"bc[{sched_kind}]: median S/E = "
        f"{float(np.median(report.ratios[:, -1])):.3f} at N = {int(report.checkpoints[-1])}"
    )

    if config["run_criterion"]:
        engine = renewal_ops.CorrelationEngine(
            p, mesh, ulam, dens, y_mesh_size=int(config["y_mesh_size"])
        )
        target = bc_harness.pullback(schedule) if config["use_pullback"] else schedule
        reports = bc_harness.criterion_ratios(
            target, engine, config["criterion_horizons"], band=int(config["band"])
        )
        bc_harness.criterion_csv(out_dir / "criterion.csv", reports)
        line += f", criterion ratio = {reports[-1].ratio:.4f}"
    click.echo(line)


if __name__ == "__main__":
    main()
