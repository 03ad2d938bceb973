"""Reproducible experiment harness.

Five experiment suites (verify-models, spectrum, estimates, reduce, sweep)
plus a plot-data emitter, driven by a JSON config with CLI overrides.  Every
suite writes a deterministic ``manifest.json`` (config echo, per-assertion
report, suite payload) and CSV traces into the output directory; identical
config and seed give byte-identical manifests in serial runs.  Exit codes:
0 all assertions pass, 1 assertion or pipeline failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ambient import EuclideanMetric, default_perturbed_metric, estimate_sweep, unitary_frame
from .errors import ConfigError, HslagError
from .fieldio import load_manifest, read_csv, save_field, write_csv, write_long_csv, write_manifest
from .geomcore import (
    ScalarField,
    hs_residual,
    induced_metric,
    mean_curvature_one_form,
    one_form_l2_norm,
    volume,
)
from .models import (
    CircleSphereModel,
    TorusModel,
    circle_sphere_lagrangian,
    circle_sphere_spectrum,
    clifford_torus,
)
from .operators import assemble_flat_operator, eigensolve, torus_multiplier
from .moser import QuadraticPerturbedForm, moser_flow
from .reduction import (
    build_context,
    optimize_frame,
    projected_solve,
    random_frame_state,
    second_variation_Q,
)

__all__ = ["ExperimentConfig", "run_suite", "main", "SUITES"]

SUITES = ("verify-models", "spectrum", "estimates", "reduce", "sweep", "plot-data")

DEFAULT_TOLERANCES: Dict[str, float] = {
    "model_residual": 1e-8,
    "spectrum_rel": 1e-4,
    "stability": 1e-6,
    "estimate_ratio": 2.0,
    "moser_pullback": 1e-6,
    "moser_identity": 1e-8,
    "solve_residual": 1e-10,
    "scaling_slope": 0.8,
    "uniqueness": 1e-9,
    "kernel_overlap": 1e-10,
    "gradient_norm": 1e-8,
    "geometric_residual": 1e-5,
    "transverse_rel": 0.1,
    "cross_rel": 1e-3,
    "frame_eig_floor": 1e-8,
}

_CONFIG_FIELDS = {
    "suite",
    "model",
    "n",
    "radii",
    "grid_size",
    "t",
    "t_values",
    "t_max",
    "amplitude",
    "metric",
    "num_waves",
    "seed",
    "seeds",
    "tolerances",
    "out_dir",
    "run",
}


@dataclass
class ExperimentConfig:
    """One experiment run: suite, model/metric descriptors, seeds, tolerances."""

    suite: str
    model: str = "torus"
    n: int = 2
    radii: Tuple[float, ...] = (1.0, 1.3)
    grid_size: int = 32
    t: float = 0.05
    t_values: Optional[Tuple[float, ...]] = None
    t_max: float = 0.1
    amplitude: float = 0.05
    metric: str = "perturbed"
    num_waves: int = 3
    seed: int = 0
    seeds: Tuple[int, ...] = (1, 2, 3)
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out_dir: str = "runs"
    run: Optional[str] = None

    def __post_init__(self) -> None:
        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}; expected one of {SUITES}")
        if self.model not in ("torus", "ln"):
            raise ConfigError(f"unknown model {self.model!r}; expected 'torus' or 'ln'")
        if self.metric not in ("perturbed", "flat"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.grid_size < 8 or self.grid_size % 2:
            raise ConfigError("grid_size must be even and at least 8")
        if not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        for name, value in self.tolerances.items():
            if name not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {name!r}")
            if not value > 0:
                raise ConfigError(f"tolerance {name!r} must be positive, got {value}")
        for t in self.all_t_values():
            if not 0 < t <= self.t_max:
                raise ConfigError(f"t value {t} outside (0, t_max={self.t_max}]")
        self.radii = tuple(float(r) for r in self.radii)
        if any(r <= 0 for r in self.radii):
            raise ConfigError("radii must be positive")
        self.seeds = tuple(int(s) for s in self.seeds)

    def all_t_values(self) -> Tuple[float, ...]:
        values = [self.t]
        if self.t_values is not None:
            values.extend(self.t_values)
        return tuple(values)

    def sweep_t_values(self) -> Tuple[float, ...]:
        return self.t_values if self.t_values is not None else (0.08, 0.04, 0.02)

    def estimate_t_values(self) -> Tuple[float, ...]:
        return self.t_values if self.t_values is not None else (0.1, 0.05, 0.025)

    def ambient_metric(self):
        if self.metric == "flat":
            return EuclideanMetric(self.n)
        return default_perturbed_metric(
            self.n, amplitude=self.amplitude, seed=self.seed, num_waves=self.num_waves
        )

    def tolerance(self, name: str) -> float:
        return self.tolerances[name]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(data) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "suite" not in data:
            raise ConfigError("config must name a suite")
        kwargs = dict(data)
        if "radii" in kwargs:
            kwargs["radii"] = tuple(kwargs["radii"])
        if "t_values" in kwargs and kwargs["t_values"] is not None:
            kwargs["t_values"] = tuple(float(t) for t in kwargs["t_values"])
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(kwargs["seeds"])
        if "tolerances" in kwargs:
            merged = dict(DEFAULT_TOLERANCES)
            merged.update(kwargs["tolerances"])
            kwargs["tolerances"] = merged
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as handle:
                data = json.load(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["radii"] = list(self.radii)
        data["seeds"] = list(self.seeds)
        if self.t_values is not None:
            data["t_values"] = list(self.t_values)
        return data


def _check(name: str, value: float, threshold: float, comparison: str = "<=") -> dict:
    value = float(value)
    passed = value <= threshold if comparison == "<=" else value >= threshold
    return {
        "name": name,
        "value": value,
        "threshold": float(threshold),
        "comparison": comparison,
        "passed": bool(passed),
    }


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def _model_instances(config: ExperimentConfig):
    return (
        ("torus", TorusModel(config.radii, grid_size=config.grid_size), clifford_torus),
        ("ln", CircleSphereModel(config.n, grid_size=config.grid_size), circle_sphere_lagrangian),
    )


def _suite_verify_models(config: ExperimentConfig, out: str):
    checks, rows, payload = [], [], {}
    for name, model, build in _model_instances(config):
        imm = build(model)
        defect = float(np.max(np.abs(hs_residual(imm).values)))
        vol = volume(imm)
        h = induced_metric(imm)
        alpha = one_form_l2_norm(mean_curvature_one_form(imm), h)
        checks.append(_check(f"{name}_hs_residual", defect, config.tolerance("model_residual")))
        rows.append((name, config.grid_size, defect, vol, alpha))
        payload[name] = {"max_residual": defect, "volume": vol, "alpha_h_norm": alpha}
    write_csv(
        os.path.join(out, "model_checks.csv"),
        ["model", "grid", "max_residual", "volume", "alpha_h_norm"],
        rows,
    )
    return checks, ["model_checks.csv"], payload


def _nearest(values: np.ndarray, target: float) -> float:
    return float(values[np.argmin(np.abs(values - target))])


def _suite_spectrum(config: ExperimentConfig, out: str):
    if config.model == "ln":
        model = CircleSphereModel(config.n, grid_size=config.grid_size)
        analytic = [
            (k, l, mult, eig)
            for (k, l, mult, eig) in circle_sphere_spectrum(config.n, 4, 4)
        ]
    else:
        model = TorusModel(config.radii, grid_size=config.grid_size)
        analytic = []
        for k1 in range(-4, 5):
            for k2 in range(-4, 5):
                eig = float(torus_multiplier(config.radii, np.array([k1, k2])))
                analytic.append((k1, k2, 1, eig))
    spectrum = eigensolve(assemble_flat_operator(model))
    eigs = spectrum.eigenvalues
    rows, worst = [], 0.0
    for k, l, mult, eig in analytic:
        numeric = _nearest(eigs, eig)
        diff = abs(numeric - eig)
        rel = diff / abs(eig) if abs(eig) > 1e-8 else diff
        worst = max(worst, rel)
        rows.append((k, l, mult, eig, numeric, diff, rel))
    checks = [
        _check("spectrum_rel_error", worst, config.tolerance("spectrum_rel")),
        _check(
            "min_eigenvalue",
            -float(np.min(eigs)),
            config.tolerance("stability"),
        ),
    ]
    write_csv(
        os.path.join(out, "spectrum.csv"),
        ["k", "l", "multiplicity", "analytic", "numeric", "abs_diff", "rel_diff"],
        rows,
    )
    payload = {
        "kernel_dimension": spectrum.kernel_size(),
        "min_eigenvalue": float(np.min(eigs)),
        "max_rel_error": worst,
    }
    return checks, ["spectrum.csv"], payload


def _suite_estimates(config: ExperimentConfig, out: str):
    metric = config.ambient_metric()
    rng = np.random.default_rng(config.seed)
    frames = [
        unitary_frame(metric, rng.uniform(0.0, 2.0 * np.pi, size=2 * config.n), seed=config.seed + i)
        for i in range(3)
    ]
    t_values = config.estimate_t_values()
    report = estimate_sweep(
        metric,
        frames,
        t_values,
        k_max=2,
        seed=config.seed,
        ratio_bound=config.tolerance("estimate_ratio"),
    )
    checks = [
        _check(f"estimate_ratio_k{k}", report.ratios[k], report.ratio_bound)
        for k in sorted(report.ratios)
    ]
    rows = [
        (t, k, report.constants[k][i])
        for k in sorted(report.constants)
        for i, t in enumerate(report.t_values)
    ]
    write_csv(os.path.join(out, "estimates.csv"), ["t", "k", "constant"], rows)

    moser = moser_flow(QuadraticPerturbedForm(config.n, c=0.1), config.n, seed=config.seed)
    checks.append(
        _check("moser_pullback", moser.pullback_defect, config.tolerance("moser_pullback"))
    )
    checks.append(_check("moser_origin", moser.origin_defect, config.tolerance("moser_identity")))
    checks.append(
        _check("moser_identity", moser.identity_defect, config.tolerance("moser_identity"))
    )
    write_csv(
        os.path.join(out, "moser.csv"),
        ["steps", "pullback_defect", "origin_defect", "identity_defect", "closedness_defect"],
        [
            (
                moser.steps,
                moser.pullback_defect,
                moser.origin_defect,
                moser.identity_defect,
                moser.closedness_defect,
            )
        ],
    )
    payload = {
        "ratios": {str(k): report.ratios[k] for k in report.ratios},
        "bounded": report.bounded,
        "moser_steps": moser.steps,
    }
    return checks, ["estimates.csv", "moser.csv"], payload


def _reduction_context(config: ExperimentConfig):
    return build_context(
        radii=config.radii,
        grid_size=config.grid_size,
        metric=config.ambient_metric(),
        amplitude=config.amplitude,
        seed=config.seed,
        t=config.t,
    )


def _suite_reduce(config: ExperimentConfig, out: str):
    ctx = _reduction_context(config)
    start = random_frame_state(ctx, seed=config.seed)
    result = optimize_frame(ctx, config.t, start)
    report = second_variation_Q(ctx, result.state, frame_block=result.hessian)

    checks = [
        _check("gradient_norm", result.gradient_norm, config.tolerance("gradient_norm")),
        _check(
            "stabilizer_gradient_norm",
            result.stabilizer_gradient_norm,
            config.tolerance("gradient_norm"),
        ),
        _check(
            "geometric_residual_rel",
            result.residual_relative,
            config.tolerance("geometric_residual"),
        ),
        _check(
            "transverse_hessian_rel",
            report.transverse_relative_error,
            config.tolerance("transverse_rel"),
        ),
        _check("cross_block_rel", report.cross_relative, config.tolerance("cross_rel")),
        _check(
            "frame_min_eigenvalue",
            float(np.min(report.frame_eigenvalues)),
            -config.tolerance("frame_eig_floor"),
            comparison=">=",
        ),
        _check("converged", 1.0 if result.state.converged else 0.0, 1.0, comparison=">="),
    ]

    write_csv(
        os.path.join(out, "trace.csv"),
        ["step", "phase", "K", "residual_norm", "gradient_norm"],
        [
            (e["step"], e["phase"], e["K"], e["residual_norm"], e["gradient_norm"])
            for e in (result.trace or [])
        ],
    )
    final_solve = projected_solve(ctx, config.t, result.state.frame)
    write_csv(
        os.path.join(out, "contraction.csv"),
        ["iteration", "residual_norm"],
        list(enumerate(final_solve.residual_history or [])),
    )
    save_field(os.path.join(out, "potential.json"), result.state.f)

    payload = {
        "converged": result.state.converged,
        "K": result.state.K_value,
        "iterations": result.state.iterations,
        "solver_evaluations": result.solver_evaluations,
        "gradient_norm": result.gradient_norm,
        "stabilizer_gradient_norm": result.stabilizer_gradient_norm,
        "geometric_residual_rel": result.residual_relative,
        "geometric_residual_abs": result.residual_absolute,
        "is_minimum": result.is_minimum,
        "saddle_restarts": result.saddle_restarts,
        "anchor_rounds": result.anchor_rounds,
        "hessian_eigenvalues": [float(v) for v in result.hessian_eigenvalues],
        "final_frame": {
            "point": [float(v) for v in result.state.frame.base_point],
            "matrix": [[float(v) for v in row] for row in result.state.frame.base_matrix],
            "coords": [float(v) for v in result.state.frame.coords],
        },
        "second_variation": {
            "transverse_fd": [float(v) for v in report.transverse_fd],
            "transverse_model": [float(v) for v in report.transverse_model],
            "transverse_relative_error": report.transverse_relative_error,
            "frame_eigenvalues": [float(v) for v in report.frame_eigenvalues],
            "cross_relative": report.cross_relative,
        },
    }
    return checks, ["trace.csv", "contraction.csv", "potential.json"], payload


def _suite_sweep(config: ExperimentConfig, out: str):
    ctx = _reduction_context(config)
    frame = random_frame_state(ctx, seed=config.seed)
    mesh = ctx.grid.meshgrid()
    alt_values = 0.01 * np.cos(3.0 * mesh[0]) * np.cos(mesh[1])
    alt_init = ScalarField(ctx.grid, alt_values, check=False)

    rows, norms, checks = [], {}, []
    worst_residual = 0.0
    worst_overlap = 0.0
    worst_agreement = 0.0
    for t in config.sweep_t_values():
        state = projected_solve(ctx, t, frame)
        other = projected_solve(ctx, t, frame, init=alt_init)
        agreement = ctx.vol_norm(
            ScalarField(ctx.grid, state.f.values - other.f.values, check=False)
        )
        norms[t] = ctx.vol_norm(state.f)
        worst_residual = max(worst_residual, state.residual_norm)
        worst_overlap = max(worst_overlap, state.kernel_overlap(ctx))
        worst_agreement = max(worst_agreement, agreement)
        rows.append((t, norms[t], state.residual_norm, state.iterations, agreement))

    ts = sorted(norms)
    log_t = np.log([t for t in ts])
    log_n = np.log([norms[t] for t in ts])
    slope = float(np.polyfit(log_t, log_n, 1)[0])

    checks.append(_check("solve_residual", worst_residual, config.tolerance("solve_residual")))
    checks.append(_check("kernel_overlap", worst_overlap, config.tolerance("kernel_overlap")))
    checks.append(_check("uniqueness", worst_agreement, config.tolerance("uniqueness")))
    checks.append(
        _check("scaling_slope", slope, config.tolerance("scaling_slope"), comparison=">=")
    )
    write_csv(
        os.path.join(out, "sweep.csv"),
        ["t", "f_norm", "residual_norm", "iterations", "init_agreement"],
        rows,
    )
    payload = {"slope": slope, "norms": {repr(t): norms[t] for t in ts}}
    return checks, ["sweep.csv"], payload


def _suite_plot_data(config: ExperimentConfig, out: str):
    run_dir = config.run
    if not run_dir:
        raise ConfigError("plot-data requires a run directory (--run)")
    if not os.path.isdir(run_dir):
        raise ConfigError(f"run directory {run_dir!r} does not exist")
    traces = sorted(glob.glob(os.path.join(run_dir, "*.csv")))
    traces = [p for p in traces if os.path.basename(p) != "plot.csv"]
    if not traces:
        raise ConfigError(f"run directory {run_dir!r} contains no CSV traces")
    long_rows: List[Tuple[str, float, float]] = []
    for path in traces:
        stem = os.path.splitext(os.path.basename(path))[0]
        header, rows = read_csv(path)
        if len(header) < 2:
            continue
        for row in rows:
            x = row[0]
            if not isinstance(x, (int, float)) or isinstance(x, bool):
                continue
            for j in range(1, len(header)):
                y = row[j]
                if not isinstance(y, (int, float)) or isinstance(y, bool):
                    continue
                long_rows.append((f"{stem}:{header[j]}", float(x), float(y)))
    write_long_csv(os.path.join(out, "plot.csv"), long_rows)
    payload = {"traces": [os.path.basename(p) for p in traces], "rows": len(long_rows)}
    return [], ["plot.csv"], payload


_SUITE_RUNNERS = {
    "verify-models": _suite_verify_models,
    "spectrum": _suite_spectrum,
    "estimates": _suite_estimates,
    "reduce": _suite_reduce,
    "sweep": _suite_sweep,
    "plot-data": _suite_plot_data,
}


def run_suite(config: ExperimentConfig) -> int:
    """Execute a suite; write manifest + traces; return the exit code."""
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    manifest = {
        "config": config.to_dict(),
        "suite": config.suite,
        "seed": config.seed,
    }
    try:
        checks, artifacts, payload = _SUITE_RUNNERS[config.suite](config, out)
    except ConfigError:
        raise
    except HslagError as exc:
        manifest.update(
            {"checks": [], "passed": False, "artifacts": [], "error": str(exc)}
        )
        write_manifest(os.path.join(out, "manifest.json"), manifest)
        print(f"suite failed: {exc}", file=sys.stderr)
        return 1
    passed = all(c["passed"] for c in checks)
    manifest.update(
        {
            "checks": checks,
            "passed": passed,
            "artifacts": sorted(artifacts),
            "payload": payload,
        }
    )
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    return 0 if passed else 1


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hslag",
        description="Experiment suites for discrete Hamiltonian stationary Lagrangian geometry.",
    )
    sub = parser.add_subparsers(dest="suite", required=True)
    for name in SUITES:
        p = sub.add_parser(name, help=f"run the {name} suite")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--t", type=float, help="scale parameter override")
        p.add_argument("--amplitude", type=float, help="metric perturbation amplitude")
        p.add_argument("--model", choices=["torus", "ln"], help="model override")
        p.add_argument("--n", type=int, help="complex dimension override")
        p.add_argument("--grid", type=int, help="grid size override")
        if name == "plot-data":
            p.add_argument("--run", help="run directory containing CSV traces")
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
        if config.suite != args.suite:
            config = dataclasses.replace(config, suite=args.suite)
    else:
        config = ExperimentConfig(suite=args.suite)
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.t is not None:
        overrides["t"] = args.t
    if args.amplitude is not None:
        overrides["amplitude"] = args.amplitude
    if args.model is not None:
        overrides["model"] = args.model
    if args.n is not None:
        overrides["n"] = args.n
    if args.grid is not None:
        overrides["grid_size"] = args.grid
    if getattr(args, "run", None) is not None:
        overrides["run"] = args.run
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_suite(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HslagError as exc:
        print(f"suite failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
