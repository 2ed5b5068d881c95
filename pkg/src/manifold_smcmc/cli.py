"""Reproducible experiment runner.

Subcommands:
  simulate     draw a trajectory and its exact observations
  filter       run the sequential filter over an observation file
  sweep-s      compare subset sizes at matched seeds, optionally in parallel
  probe-delta  acceptance-gap table of the noisy kernel against its limit

Every run requires an explicit seed and writes a manifest sufficient to
reproduce it.  Sample and diagnostic files are byte-stable for a fixed seed;
wall-time columns are the only nondeterministic fields.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .engine import SmcmcConfig, run_filter
from .errors import ConfigError, ContractViolationError, InitializationError
from .geometry import ConstraintSystem, gram_log_weight
from .kernel import KernelConfig, adapt_rho
from .linear_noise import (
    LinearObservation,
    build_parametrization,
    convergence_probe,
    degenerate_acceptance,
    factorized_marginal_acceptance,
)
from .models import (
    MaternConfig,
    ModelSpec,
    fhn_taylor15_spec,
    ks_preconditioner,
    ks_spec,
    lgm_spec,
    simulate_path,
    sphere_spec,
)
from .engine import init_state
from .oracles import kalman_filter_path
from .rng import DATA_STREAM, PROBE_STREAM, TUNING_STREAM, stream

SCHEMA_VERSION = 1
PRESETS = ("lgm", "sphere", "fhn", "ks")

# ---------------------------------------------------------------------------
# Config handling


def load_config(spec: str, smoke: bool = False) -> dict:
    """Load a config from a preset name or a JSON file path."""
    if spec in PRESETS:
        text = resources.files("manifold_smcmc.presets").joinpath(f"{spec}.json").read_text()
    else:
        path = Path(spec)
        if not path.exists():
            raise ConfigError(f"config {spec!r} is neither a preset {PRESETS} nor a file")
        text = path.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg.get('schema_version')!r}")
    if smoke:
        overrides = cfg.get("smoke")
        if not overrides:
            raise ConfigError("config has no smoke block")
        cfg = _merge(cfg, overrides)
    cfg.pop("smoke", None)
    return cfg


def _merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def build_model(model_cfg: dict) -> ModelSpec:
    cfg = dict(model_cfg)
    name = cfg.pop("name", None)
    cfg.pop("precondition_sigma_y", None)
    try:
        if name == "lgm":
            return lgm_spec(**cfg)
        if name == "sphere":
            return sphere_spec(**cfg)
        if name == "fhn":
            return fhn_taylor15_spec(**cfg)
        if name == "ks":
            matern = cfg.pop("matern", None)
            if matern is not None:
                cfg["matern"] = MaternConfig(**matern)
            return ks_spec(**cfg)
    except (TypeError, ContractViolationError) as exc:
        raise ConfigError(f"invalid parameters for model {name!r}: {exc}") from exc
    raise ConfigError(f"unknown model {name!r}; expected one of {PRESETS}")


def build_smcmc_config(smcmc_cfg: dict, rho: float) -> SmcmcConfig:
    try:
        return SmcmcConfig(
            n_particles=int(smcmc_cfg["n_particles"]),
            subset_size=int(smcmc_cfg["subset_size"]),
            kernel=KernelConfig(
                rho=rho,
                target_acceptance=float(smcmc_cfg.get("target_acceptance", 0.234)),
            ),
            burn_in=smcmc_cfg.get("burn_in"),
            index_moves_per_sweep=int(smcmc_cfg.get("index_moves_per_sweep", 1)),
        )
    except (KeyError, ContractViolationError, ValueError) as exc:
        raise ConfigError(f"invalid smcmc block: {exc}") from exc


def _resolve_rho(cfg: dict, model: ModelSpec, observations: np.ndarray, seed: int) -> float:
    smcmc = cfg["smcmc"]
    if smcmc.get("auto_tune_rho"):
        sys_1 = ConstraintSystem(
            model.dim_x, model.dim_y, observations[0], model.observe,
            model.observe_jacobian, constant_jacobian=model.constant_jacobian,
        )
        table = model.transition_table(1, np.asarray(model.initial_state)[None, :])

        def pilot(x):
            return gram_log_weight(sys_1, x) + float(table.logpdf(x, np.array([0]))[0])

        rng = stream(seed, TUNING_STREAM)
        x0 = init_state(sys_1, np.asarray(model.initial_state, dtype=float), rng=rng)
        start = float(smcmc.get("rho") or 0.1)
        base = KernelConfig(rho=start, target_acceptance=float(smcmc.get("target_acceptance", 0.234)))
        return adapt_rho(base, pilot, sys_1, x0, rng)
    rho = smcmc.get("rho")
    if rho is None:
        raise ConfigError("smcmc.rho must be set unless auto_tune_rho is true")
    return float(rho)


# ---------------------------------------------------------------------------
# File output


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return f"{value:.17g}"
    return value


def _write_manifest(out: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    payload["package_version"] = __version__
    (out / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _prepare_out(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def read_observations(path: str | Path, dim_y: int) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != dim_y + 1:
        raise ConfigError(
            f"observation file has {data.shape[1] - 1} value columns, model expects {dim_y}"
        )
    return data[:, 1:]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.smoke)
    model = build_model(cfg["model"])
    n_steps = int(cfg["run"]["n_observations"])
    rng = stream(args.seed, DATA_STREAM)
    states, observations = simulate_path(model, n_steps, rng)
    out = _prepare_out(args.out)

    trajectory = [(0, *model.initial_state)] + [(k + 1, *states[k]) for k in range(n_steps)]
    _write_csv(out / "trajectory.csv", ["k"] + [f"x_{i+1}" for i in range(model.dim_x)], trajectory)
    _write_csv(
        out / "observations.csv",
        ["k"] + [f"y_{i+1}" for i in range(model.dim_y)],
        [(k + 1, *observations[k]) for k in range(n_steps)],
    )
    _write_manifest(
        out,
        {
            "command": "simulate",
            "config": cfg,
            "seed": args.seed,
            "outputs": ["trajectory.csv", "observations.csv"],
        },
    )
    print(f"simulate: wrote {n_steps} steps of {model.name} to {out}")
    return 0


def _filter_once(cfg: dict, observations: np.ndarray, seed: int):
    """Shared by filter and sweep: build, tune, run; returns (run, rho)."""
    model = build_model(cfg["model"])
    if observations.shape[1] != model.dim_y:
        raise ConfigError("observation dimension does not match the model")
    rho = _resolve_rho(cfg, model, observations, seed)
    smcmc = build_smcmc_config(cfg["smcmc"], rho)
    precondition = None
    sigma_y = cfg["model"].get("precondition_sigma_y")
    if model.name == "ks" and sigma_y is not None:
        precondition = ks_preconditioner(model, float(sigma_y))
    run = run_filter(model, observations, smcmc, seed, precondition=precondition)
    return model, run, rho


def _kalman_errors(model, observations, run):
    """Per-step L2 errors of the filter mean/std against the exact filter."""
    beliefs = kalman_filter_path(model, observations)
    mean_err, std_err = [], []
    for cloud, belief in zip(run.clouds, beliefs):
        mean_err.append(float(np.linalg.norm(cloud.mean() - belief.mean)))
        ref_std = np.sqrt(np.clip(np.diag(belief.covariance), 0.0, None))
        std_err.append(float(np.linalg.norm(cloud.std() - ref_std)))
    return mean_err, std_err


def cmd_filter(args) -> int:
    cfg = load_config(args.config, args.smoke)
    model_probe = build_model(cfg["model"])
    observations = read_observations(args.observations, model_probe.dim_y)
    model, run, rho = _filter_once(cfg, observations, args.seed)
    out = _prepare_out(args.out)

    width = len(str(len(run.clouds)))
    sample_files = []
    for cloud in run.clouds:
        name = f"samples_k{cloud.time_index:0{width}d}.csv"
        _write_csv(
            out / name,
            [f"x_{i+1}" for i in range(model.dim_x)],
            cloud.states,
        )
        sample_files.append(name)

    if model.name == "lgm":
        mean_err, std_err = _kalman_errors(model, observations, run)
    else:
        mean_err = std_err = [float("nan")] * len(run.clouds)
    _write_csv(
        out / "diagnostics.csv",
        ["k", "acceptance_rate", "ess_median", "ess_min", "wall_time_s",
         "l2_mean_error", "l2_std_error"],
        [
            (d.time_index, d.acceptance_rate, d.ess_median, d.ess_min, d.wall_time,
             mean_err[i], std_err[i])
            for i, d in enumerate(run.diagnostics)
        ],
    )
    _write_manifest(
        out,
        {
            "command": "filter",
            "config": cfg,
            "seed": args.seed,
            "rho": rho,
            "observations_file": str(args.observations),
            "outputs": sample_files + ["diagnostics.csv"],
        },
    )
    acc = np.mean([c.acceptance_rate for c in run.clouds])
    print(f"filter: {len(run.clouds)} steps, mean acceptance {acc:.3f}, outputs in {out}")
    return 0


def _sweep_task(payload):
    cfg, s, replicate, master_seed = payload
    cfg = _merge(cfg, {"smcmc": {"subset_size": s}})
    model = build_model(cfg["model"])
    data_rng = stream(master_seed, DATA_STREAM, replicate)
    _, observations = simulate_path(model, int(cfg["run"]["n_observations"]), data_rng)
    run_seed = int(np.random.SeedSequence(master_seed, spawn_key=(9, replicate)).generate_state(1)[0])
    model, run, _ = _filter_once(cfg, observations, run_seed)
    mean_err, std_err = _kalman_errors(model, observations, run)
    return {
        "s": s,
        "replicate": replicate,
        "ess_median": float(np.median([d.ess_median for d in run.diagnostics])),
        "l2_mean_error": mean_err[-1],
        "l2_std_error": std_err[-1],
        "total_runtime_s": float(sum(d.wall_time for d in run.diagnostics)),
    }


def cmd_sweep_s(args) -> int:
    cfg = load_config(args.config, args.smoke)
    if cfg["model"].get("name") != "lgm":
        raise ConfigError("sweep-s needs the lgm model (it compares against the exact filter)")
    s_list = [int(s) for s in args.s_list.split(",") if s]
    if not s_list:
        raise ConfigError("empty s list")
    tasks = [(cfg, s, r, args.seed) for s in s_list for r in range(args.replicates)]
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    results.sort(key=lambda r: (r["s"], r["replicate"]))

    out = _prepare_out(args.out)
    _write_csv(
        out / "sweep.csv",
        ["s", "replicate", "ess_median", "l2_mean_error", "l2_std_error", "total_runtime_s"],
        [
            (r["s"], r["replicate"], r["ess_median"], r["l2_mean_error"],
             r["l2_std_error"], r["total_runtime_s"])
            for r in results
        ],
    )
    _write_manifest(
        out,
        {
            "command": "sweep-s",
            "config": cfg,
            "seed": args.seed,
            "s_list": s_list,
            "replicates": args.replicates,
            "outputs": ["sweep.csv"],
        },
    )
    print(f"sweep-s: {len(results)} runs over s={s_list}, outputs in {out}")
    return 0


def cmd_probe_delta(args) -> int:
    cfg = load_config(args.config, args.smoke)
    model = build_model(cfg["model"])
    if "A" not in model.extras:
        raise ConfigError("probe-delta needs a model with a linear observation matrix")
    probe_cfg = cfg.get("probe", {})
    n_prev = int(probe_cfg.get("n_prev", 10))
    z_scale = float(probe_cfg.get("z_scale", 0.05))
    zbar_scale = float(probe_cfg.get("zbar_scale", 3e-4))
    delta_grid = probe_cfg.get("delta_grid") or [10.0 ** (-e) for e in range(1, 9)]

    rng = stream(args.seed, PROBE_STREAM)
    # Previous cloud: independent draws of the first transition; target time k=2.
    prev_states = np.array(
        [model.simulate_step(1, model.initial_state, rng) for _ in range(n_prev)]
    )
    y2 = model.observe(model.simulate_step(2, prev_states[0], rng))
    a_mat = model.extras["A"]
    d_free = model.dim_x - model.dim_y
    z_tilde = np.concatenate(
        [z_scale * rng.standard_normal(d_free), zbar_scale * rng.standard_normal(model.dim_y)]
    )
    z_tilde_new = np.concatenate(
        [z_tilde[:d_free] + z_scale * rng.standard_normal(d_free),
         zbar_scale * rng.standard_normal(model.dim_y)]
    )
    rows = convergence_probe(
        z_tilde, z_tilde_new, prev_states, model, 2, a_mat, y2, delta_grid
    )

    degenerate = build_parametrization(LinearObservation(a_mat, y2, 0.0))
    factorized = factorized_marginal_acceptance(
        degenerate, prev_states, model, 2, z_tilde, z_tilde_new
    )
    plain = degenerate_acceptance(
        degenerate, prev_states, model, 2, z_tilde[:d_free], z_tilde_new[:d_free]
    )

    out = _prepare_out(args.out)
    _write_csv(
        out / "probe.csv",
        ["delta", "acceptance_delta", "acceptance_limit", "gap"],
        [(r["delta"], r["acceptance_delta"], r["acceptance_limit"], r["gap"]) for r in rows],
    )
    gaps = [r["gap"] for r in rows]
    tail = [g for r, g in zip(rows, gaps) if r["delta"] < 1e-3]
    monotone = all(tail[i] >= tail[i + 1] for i in range(len(tail) - 1))
    _write_manifest(
        out,
        {
            "command": "probe-delta",
            "config": cfg,
            "seed": args.seed,
            "final_gap": gaps[-1],
            "monotone_tail": monotone,
            "factorized_identity_error": abs(factorized - plain),
            "outputs": ["probe.csv"],
        },
    )
    print(
        f"probe-delta: final gap {gaps[-1]:.3e} at delta={rows[-1]['delta']:.0e}, "
        f"monotone tail: {monotone}, factorized identity error {abs(factorized - plain):.2e}"
    )
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manifold-smcmc",
        description="Sequential MCMC filtering on observation manifolds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help=f"preset name {PRESETS} or JSON path")
        p.add_argument("--seed", required=True, type=int, help="master seed (no wall-clock seeding)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--smoke", action="store_true", help="apply the preset's smoke overrides")

    p = sub.add_parser("simulate", help="draw a trajectory and observations")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter", help="run the sequential filter")
    common(p)
    p.add_argument("--observations", required=True, help="observations.csv from simulate")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("sweep-s", help="subset-size study at matched seeds")
    common(p)
    p.add_argument("--s-list", default="1,10,20,30,40,50", help="comma-separated subset sizes")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep_s)

    p = sub.add_parser("probe-delta", help="noise-to-degenerate acceptance gap table")
    common(p)
    p.set_defaults(func=cmd_probe_delta)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InitializationError, ContractViolationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
