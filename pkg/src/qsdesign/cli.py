"""Command-line interface.

Subcommands:
  simulate     run the full comparison experiment from a config file
  design       select sampling directions for a stored prior field
  esr          electrostatic-repulsion design of a given size
  prior-build  build a synthetic prior field (or one voxel from a cohort CSV)
  prior-interp interpolate a prior field at a continuous coordinate

Exit codes: 0 success, 2 validation error, 3 numerical degeneracy.
The QSPACE_THREADS environment variable overrides --threads.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import load_sim_config, sim_config_from_dict
from .design import (
    coulomb_energy,
    default_candidates,
    esr_design,
    gradient_table,
    greedy_bound,
    greedy_design,
    greedy_design_region,
)
from .errors import DegeneracyError, ValidationError
from .prior import (
    PriorField,
    VoxelPrior,
    empirical_moments,
    interpolate_prior,
    load_prior_field,
    save_prior_field,
)
from .runner import build_prior_from_cohort, run_simulation, write_outputs
from .sim import cohort_from_csv, generate_cohort
from .sphere import ShBasis


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsdesign",
        description="Optimal sampling-direction design and sparse spherical reconstruction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the comparison experiment")
    p.add_argument("--config", required=True, help="YAML experiment configuration")
    _add_common(p)

    p = sub.add_parser("design", help="greedy design for a stored prior field")
    p.add_argument("--prior", required=True, help="prior field file (.qpf)")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--mode", choices=("single", "region"), default="single")
    p.add_argument("--voxel", default=None, help="voxel index i,j,k (single mode)")
    p.add_argument("--candidates", type=int, default=321, help="candidate pool size")
    _add_common(p)

    p = sub.add_parser("esr", help="electrostatic-repulsion design")
    p.add_argument("--count", type=int, required=True, help="number of directions")
    _add_common(p)

    p = sub.add_parser("prior-build", help="build a prior field")
    p.add_argument("--config", required=True, help="YAML build configuration")
    _add_common(p)

    p = sub.add_parser("prior-interp", help="interpolate a prior field")
    p.add_argument("--prior", required=True, help="prior field file (.qpf)")
    p.add_argument("--query", required=True, help="continuous coordinate x,y,z")
    _add_common(p)
    return parser


def _parse_triplet(text, kind=float):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ValidationError(f"expected three comma-separated values, got {text!r}")
    return tuple(kind(p) for p in parts)


def _out_dir(args, default="results") -> Path:
    out = Path(args.out if args.out is not None else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(args) -> int:
    cfg = load_sim_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    result = run_simulation(cfg)
    out = write_outputs(result, cfg.out_dir)
    print(f"wrote {out / 'metrics.csv'} ({len(result.rows)} rows, {result.elapsed_seconds:.1f}s)")
    return 0


def _cmd_design(args) -> int:
    field = load_prior_field(args.prior)
    if not field.priors:
        raise ValidationError(f"{args.prior} contains no voxel priors")
    basis = ShBasis(field.max_degree)
    candidates = default_candidates(args.candidates)
    if args.budget > len(candidates):
        raise ValidationError("budget exceeds the candidate pool")
    if args.mode == "single":
        if args.voxel is not None:
            index = _parse_triplet(args.voxel, int)
            if index not in field.priors:
                raise ValidationError(f"voxel {index} not present in the field")
        else:
            index = sorted(field.priors)[0]
        prior = field.priors[index]
        result = greedy_design(candidates, prior, basis, args.budget)
        bound = greedy_bound(prior, candidates, basis, args.budget, args.budget)
    else:
        priors = [field.priors[k] for k in sorted(field.priors)]
        weights = np.full(len(priors), 1.0 / len(priors))
        result = greedy_design_region(candidates, priors, weights, basis, args.budget)
        # conservative certificate: worst-case spectrum constants across voxels
        worst = min(
            (greedy_bound(p, candidates, basis, args.budget, args.budget) for p in priors),
            key=lambda cert: cert.factor,
        )
        bound = worst
    out = _out_dir(args)
    table_path = out / f"design_{args.mode}_{args.budget:03d}.txt"
    table_path.write_text(gradient_table(candidates.points[result.selected]))
    report = {
        "mode": args.mode,
        "budget": args.budget,
        "selected_indices": [int(i) for i in result.selected],
        "objective_per_step": [float(v) for v in result.objective_history],
        "bound_certificate": dataclasses.asdict(bound),
    }
    report_path = out / f"design_{args.mode}_{args.budget:03d}.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"wrote {table_path} and {report_path} (objective {result.objective:.6g})")
    return 0


def _cmd_esr(args) -> int:
    seed = args.seed if args.seed is not None else 0
    points = esr_design(args.count, seed=seed)
    out = _out_dir(args)
    path = out / f"esr_{args.count:03d}.txt"
    path.write_text(gradient_table(points))
    print(f"wrote {path} (final energy {coulomb_energy(points):.6f})")
    return 0


def _cmd_prior_build(args) -> int:
    try:
        with open(args.config) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ValidationError(f"cannot read {args.config}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"{args.config} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("build configuration must be a mapping")
    grid_shape = tuple(int(s) for s in raw.pop("grid_shape", (1, 1, 1)))
    rotation_step = float(raw.pop("rotation_per_voxel_degrees", 10.0))
    cohort_csv = raw.pop("cohort_csv", None)
    noise_variance = float(raw.pop("noise_variance", 1e-4))
    cfg = sim_config_from_dict(raw)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    basis = ShBasis(cfg.degree)
    field = PriorField(grid_shape, {}, cfg.degree, cfg.rank_rule)

    if cohort_csv is not None:
        rows = cohort_from_csv(cohort_csv)
        if rows.shape[1] != basis.dimension:
            raise ValidationError(
                f"cohort CSV has {rows.shape[1]} columns, expected {basis.dimension}"
            )
        mean, cov = empirical_moments(rows)
        field.add((0, 0, 0), VoxelPrior.from_moments(mean, cov, noise_variance, cfg.rank_rule))
    else:
        dense_points = esr_design(cfg.dense_design_size, seed=cfg.seed)
        for index in np.ndindex(grid_shape):
            # smooth synthetic variation across the grid: rotate the
            # generative mean directions about z proportionally to the index
            angle = np.radians(rotation_step) * sum(index)
            rot = np.array(
                [
                    [np.cos(angle), -np.sin(angle), 0.0],
                    [np.sin(angle), np.cos(angle), 0.0],
                    [0.0, 0.0, 1.0],
                ]
            )
            gen = dataclasses.replace(
                cfg.generative,
                mean_directions=tuple(
                    tuple(rot @ np.asarray(m)) for m in cfg.generative.mean_directions
                ),
            )
            voxel_seed = int(np.random.SeedSequence((cfg.seed, 3, *index)).generate_state(1)[0])
            truths = generate_cohort(basis, gen, cfg.train_subjects, voxel_seed)
            voxel_cfg = dataclasses.replace(cfg, seed=voxel_seed)
            field.add(index, build_prior_from_cohort(truths, dense_points, voxel_cfg, "prior-build"))

    out = _out_dir(args)
    path = out / "prior_field.qpf"
    save_prior_field(field, path)
    print(f"wrote {path} ({len(field)} voxels, J={basis.dimension})")
    return 0


def _cmd_prior_interp(args) -> int:
    field = load_prior_field(args.prior)
    query = _parse_triplet(args.query, float)
    prior = interpolate_prior(field, np.asarray(query))
    out = _out_dir(args)
    result = PriorField((1, 1, 1), {(0, 0, 0): prior}, field.max_degree, field.rank_rule)
    path = out / "prior_interp.qpf"
    save_prior_field(result, path)
    print(
        f"wrote {path} (rank {prior.rank}, noise variance {prior.noise_variance:.3e}, "
        f"top eigenvalue {prior.eigenvalues[0]:.6g})"
    )
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "design": _cmd_design,
    "esr": _cmd_esr,
    "prior-build": _cmd_prior_build,
    "prior-interp": _cmd_prior_interp,
}


def run(argv=None) -> int:
    """Parse arguments and dispatch; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        raise ValidationError("--threads must be >= 1")
    return _COMMANDS[args.command](args)


def main(argv=None) -> int:
    try:
        return run(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DegeneracyError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
