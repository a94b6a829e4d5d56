"""Command-line front end for phantom generation, simulation, and solving.

A run is described by one INI-style config file with sections
[geometry], [model], [solver], and [noise]; command-line overrides of
the form ``--set section.key=value`` win over the file. Every simulate
or solve invocation writes a fully resolved config echo next to its
outputs, and re-running from that echo reproduces the outputs byte for
byte. Wall-clock time is reported on stdout only, so output bundles
stay deterministic.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .linop import read_matrix_market, write_matrix_market
from .solver import (DivergenceError, FixedSteps, PreconditionedSteps,
                     StepSizeError, StopRule, default_fixed_steps, solve)
from .tomo import (CtModelSpec, Geometry, TomoProblem, add_noise,
                   build_ct_problem, paralleltomo, read_pgm, read_vector_csv,
                   shepp_logan, snr_db, write_pgm, write_vector_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_RUNTIME = 4

SECTION_ORDER = ("geometry", "model", "solver", "noise")

DEFAULTS = {
    "geometry": {"n": "64", "angles": "0:10:179", "p": "default"},
    "model": {"w1": "0.5", "w2": "0.5", "lambda": "0.8", "tv": "atv",
              "constraint": "nonneg", "method": "II"},
    "solver": {"policy": "preconditioned", "alpha": "1.0", "tau": "", "sigma": "",
               "theta": "1.0", "epsilon": "1e-4", "max_iter": "40000",
               "log_every": "50"},
    "noise": {"gaussian_rel": "0.01", "impulse_fraction": "0.05",
              "impulse_scale": "1.0", "seed": "0"},
}


class ConfigError(ValueError):
    """A config value failed to parse; the message carries the field path."""


def parse_angles(text: str) -> tuple:
    """Angles as 'start:step:stop' (inclusive endpoint) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("angle step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        if count < 1:
            raise ValueError(f"empty angle range {text!r}")
        return tuple(start + i * step for i in range(count))
    return tuple(float(p) for p in text.split(","))


def parse_constraint(text: str):
    text = text.strip().lower()
    if text in ("none", ""):
        return None
    if text == "nonneg":
        return "nonneg"
    if text.startswith("box:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected box:lo:hi, got {text!r}")
        return (float(parts[1]), float(parts[2]))
    raise ValueError(f"unknown constraint {text!r} (use none, nonneg, or box:lo:hi)")


def load_config(path: Optional[str], overrides: list) -> dict:
    """Merge defaults, an optional config file, and --set overrides."""
    merged = {section: dict(values) for section, values in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in merged:
                raise ConfigError(f"{section}: unknown config section")
            for key, value in parser.items(section):
                if key not in merged[section]:
                    raise ConfigError(f"{section}.{key}: unknown config key")
                merged[section][key] = value
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        field, value = item.split("=", 1)
        section, key = field.split(".", 1)
        if section not in merged or key not in merged[section]:
            raise ConfigError(f"{field}: unknown config key")
        merged[section][key] = value
    return merged


def write_config_echo(config: dict, path):
    lines = []
    for section in SECTION_ORDER:
        lines.append(f"[{section}]")
        for key, value in config[section].items():
            lines.append(f"{key} = {value}")
        lines.append("")
    Path(path).write_text("\n".join(lines), newline="\n")


def _get(config, section, key, conv, what=""):
    raw = config[section][key]
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


@dataclass
class RunConfig:
    """Typed view of one merged config."""

    n: int
    angles: tuple
    p: Optional[int]
    model: CtModelSpec
    policy: str
    tau: Optional[float]
    sigma: Optional[float]
    alpha: float
    theta: float
    epsilon: float
    max_iter: int
    log_every: int
    gaussian_rel: float
    impulse_fraction: float
    impulse_scale: float
    seed: int
    raw: dict


def parse_run_config(config: dict) -> RunConfig:
    n = _get(config, "geometry", "n", int)
    if n < 1:
        raise ConfigError("geometry.n: must be >= 1")
    angles = _get(config, "geometry", "angles", parse_angles)
    p_raw = config["geometry"]["p"].strip().lower()
    p = None if p_raw in ("default", "") else _get(config, "geometry", "p", int)

    try:
        model = CtModelSpec(
            w1=_get(config, "model", "w1", float),
            w2=_get(config, "model", "w2", float),
            tv_weight=_get(config, "model", "lambda", float),
            tv=config["model"]["tv"].strip().lower(),
            constraint=_get(config, "model", "constraint", parse_constraint),
            method=config["model"]["method"].strip().upper(),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc

    policy = config["solver"]["policy"].strip().lower()
    if policy not in ("fixed", "auto-fixed", "preconditioned"):
        raise ConfigError(f"solver.policy: unknown policy {policy!r}")
    tau_raw = config["solver"]["tau"].strip()
    sigma_raw = config["solver"]["sigma"].strip()
    tau = float(tau_raw) if tau_raw else None
    sigma = float(sigma_raw) if sigma_raw else None
    if policy == "fixed" and (tau is None or sigma is None):
        raise ConfigError("solver.tau/solver.sigma: required for the fixed policy")

    return RunConfig(
        n=n, angles=angles, p=p, model=model, policy=policy, tau=tau, sigma=sigma,
        alpha=_get(config, "solver", "alpha", float),
        theta=_get(config, "solver", "theta", float),
        epsilon=_get(config, "solver", "epsilon", float),
        max_iter=_get(config, "solver", "max_iter", int),
        log_every=_get(config, "solver", "log_every", int),
        gaussian_rel=_get(config, "noise", "gaussian_rel", float),
        impulse_fraction=_get(config, "noise", "impulse_fraction", float),
        impulse_scale=_get(config, "noise", "impulse_scale", float),
        seed=_get(config, "noise", "seed", int),
        raw=config,
    )


def cmd_phantom(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(out, shepp_logan(args.n))
    print(f"wrote {args.n}x{args.n} phantom to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_config(args.config, args.set)
    rc = parse_run_config(config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    problem = paralleltomo(rc.n, rc.angles, rc.p)
    clean = problem.projections
    sigma_abs = rc.gaussian_rel * float(np.mean(np.abs(clean))) if clean.size else 0.0
    noisy = add_noise(clean, gaussian_sigma=sigma_abs,
                      impulse_fraction=rc.impulse_fraction,
                      impulse_scale=rc.impulse_scale, seed=rc.seed)

    write_matrix_market(problem.system_matrix, outdir / "system_matrix.mtx")
    write_vector_csv(outdir / "projections.csv", noisy)
    write_vector_csv(outdir / "x_true.csv", problem.ground_truth)

    meta = [
        "[geometry]",
        f"n = {problem.geometry.n}",
        "angles = " + ",".join(f"{a:.17g}" for a in problem.geometry.angles_deg),
        f"p = {problem.geometry.p}",
        "",
        "[noise]",
        f"gaussian_sigma = {sigma_abs:.17g}",
        f"gaussian_rel = {rc.gaussian_rel:.17g}",
        f"impulse_fraction = {rc.impulse_fraction:.17g}",
        f"impulse_scale = {rc.impulse_scale:.17g}",
        f"seed = {rc.seed}",
        "",
    ]
    (outdir / "meta.cfg").write_text("\n".join(meta), newline="\n")
    write_config_echo(config, outdir / "config_echo.cfg")

    shape = problem.system_matrix.shape
    print(f"wrote bundle to {outdir}: system matrix {shape.rows}x{shape.cols}, "
          f"{len(problem.geometry.angles_deg)} angles, p={problem.geometry.p}")
    return EXIT_OK


def _read_bundle(bundle: Path) -> TomoProblem:
    meta = configparser.ConfigParser()
    if not meta.read(bundle / "meta.cfg"):
        raise ConfigError(f"bundle metadata not found: {bundle / 'meta.cfg'}")
    n = meta.getint("geometry", "n")
    angles = tuple(float(a) for a in meta.get("geometry", "angles").split(","))
    p = meta.getint("geometry", "p")
    matrix = read_matrix_market(bundle / "system_matrix.mtx")
    projections = read_vector_csv(bundle / "projections.csv")
    x_true = read_vector_csv(bundle / "x_true.csv")
    if matrix.cols != n * n:
        raise ConfigError(f"bundle mismatch: matrix has {matrix.cols} columns for n={n}")
    if projections.size != matrix.rows:
        raise ConfigError(f"bundle mismatch: {projections.size} projections for "
                          f"{matrix.rows} matrix rows")
    return TomoProblem(system_matrix=matrix, projections=projections,
                       ground_truth=x_true,
                       geometry=Geometry(n=n, angles_deg=angles, p=p))


def cmd_solve(args) -> int:
    config = load_config(args.config, args.set)
    rc = parse_run_config(config)
    bundle = _read_bundle(Path(args.bundle))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    problem = build_ct_problem(bundle, rc.model)
    if rc.policy == "preconditioned":
        policy = PreconditionedSteps(alpha=rc.alpha, theta=rc.theta)
    elif rc.policy == "auto-fixed":
        tau, sigma = default_fixed_steps(problem)
        policy = FixedSteps(tau=tau, sigma=sigma, theta=rc.theta)
    else:
        policy = FixedSteps(tau=rc.tau, sigma=rc.sigma, theta=rc.theta)

    x_true = bundle.ground_truth

    start = time.perf_counter()
    result = solve(problem, policy, StopRule(epsilon=rc.epsilon, max_iter=rc.max_iter),
                   log_every=rc.log_every, metric=lambda x: snr_db(x_true, x))
    wall = time.perf_counter() - start

    write_pgm(outdir / "reconstruction.pgm", np.clip(result.x, 0.0, 1.0))
    write_vector_csv(outdir / "x_rec.csv", result.x)
    with open(outdir / "history.csv", "w", newline="\n") as fh:
        fh.write("iter,rel_change,objective,snr_db\n")
        for record in result.history:
            fh.write(f"{record.iteration},{record.relative_change:.17g},"
                     f"{record.objective:.17g},{record.metric:.17g}\n")

    final_snr = snr_db(x_true, result.x)
    summary = [
        f"final_snr_db = {final_snr:.17g}",
        f"iterations = {result.iterations}",
        f"converged = {str(result.converged).lower()}",
        "",
    ]
    (outdir / "summary.txt").write_text("\n".join(summary), newline="\n")
    write_config_echo(config, outdir / "config_echo.cfg")

    print(f"final SNR {final_snr:.2f} dB after {result.iterations} iterations "
          f"(converged={result.converged}), wall time {wall:.2f} s")
    if result.converged or args.allow_max_iter:
        return EXIT_OK
    return EXIT_NOT_CONVERGED


def _read_image_or_vector(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_vector_csv(path)


def cmd_eval(args) -> int:
    truth = _read_image_or_vector(Path(args.truth))
    recon = _read_image_or_vector(Path(args.recon))
    if truth.size != recon.size:
        raise ConfigError(f"length mismatch: {truth.size} vs {recon.size}")
    snr = snr_db(truth, recon)
    rel = float(np.linalg.norm(truth - recon) / np.linalg.norm(truth))
    print(f"snr_db = {snr:.6g}")
    print(f"rel_l2 = {rel:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdsplit",
        description="Splitting primal-dual proximity solvers with a CT test harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_phantom = sub.add_parser("phantom", help="render the head phantom as a PGM image")
    p_phantom.add_argument("--n", type=int, default=256, help="image side length")
    p_phantom.add_argument("--out", required=True, help="output PGM path")
    p_phantom.set_defaults(func=cmd_phantom)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable; wins over the file)")

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="generate a projection data bundle")
    p_sim.add_argument("--out", required=True, help="bundle output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_solve = sub.add_parser("solve", parents=[common],
                             help="reconstruct from a simulated bundle")
    p_solve.add_argument("--bundle", required=True, help="bundle directory from simulate")
    p_solve.add_argument("--out", required=True, help="result output directory")
    p_solve.add_argument("--allow-max-iter", action="store_true",
                         help="exit 0 even when the iteration cap was hit")
    p_solve.set_defaults(func=cmd_solve)

    p_eval = sub.add_parser("eval", help="SNR and relative error between two images")
    p_eval.add_argument("--truth", required=True, help="ground-truth CSV or PGM")
    p_eval.add_argument("--recon", required=True, help="reconstruction CSV or PGM")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepSizeError, DivergenceError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
