#!/usr/bin/env python3
"""
CLI - batch front-end for the jump-diffusion toolkit

Loads model/change specs named in a JSON run-config, dispatches one
computation and writes CSV/JSON results into the data directory (or --out).

Commands:
    validate            model (and change) invariants
    simulate            path dump CSV
    expectation         mu_i(t) by the Volterra solver, optional Monte Carlo check
    entropy             H_i(t) by the Volterra solver, closed form and optional Monte Carlo
    girsanov            Q-model of a change, as JSON
    esscher             Esscher change, as JSON
    telegraph-measure   unique jump-telegraph martingale measure, as JSON
    memm short|long|horizon
    levy                one-regime MEMM
    figures             horizon sweep of the preset problem (CSV behind both figures)

Exit codes: 0 success, 1 validation failure, 2 I/O or parse error.

Usage:
    python cli.py validate --config run.json
    python cli.py memm horizon --config run.json --horizon 2
    python cli.py figures --out figure_sweep.csv
"""

# Windows compatibility: ensure local imports work
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))

import argparse
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from config import (
    DEFAULTS, ConfigError, default_step, get_path, load_config_file, merge_flags, resolve_input,
)
from descriptors import SpecError
from measures import NoMeasure, esscher_transform, jump_telegraph_unique_measure
from memm import (
    FIGURE_ONE, HorizonConvergenceError, MemmProblem, horizon_sweep, solve_horizon,
    solve_levy, solve_long_term, solve_short_term, write_sweep_csv,
)
from model import (
    DomainError, InaccessibleMeasureError, InvariantViolation, MeasureChangeSpec,
    ModelSpec, PreconditionError, apply_girsanov, save_change, save_model,
    validate_change, validate_model,
)
from simulate import (
    Functional, SwitchLimitError, mc_expectation, path_generator,
    write_estimates_csv, write_paths_csv,
)
from volterra import constant_entropy_coefficients, solve_entropy, solve_mu

COMMANDS = ["validate", "simulate", "expectation", "entropy", "girsanov", "esscher",
            "telegraph-measure", "memm", "levy", "figures"]
MC_COMMANDS = {"expectation", "entropy"}
PRESETS = {"figure_one": FIGURE_ONE}
FIGURE_TIMES = np.logspace(-3, 2, 61)


def _describe(kind) -> str:
    return "an integer" if kind is int else "a number"


def config_number(source: Dict[str, Any], key: str, default, kind=float):
    """Typed run-config entry; a missing key gives `default`, a mistyped value a ConfigError."""
    value = source.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or (kind is int and isinstance(value, float) and not value.is_integer()):
        raise ConfigError(f"'{key}' must be {_describe(kind)}, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be {_describe(kind)}, got {value!r}") from None


def config_numbers(source: Dict[str, Any], key: str, default=None) -> Optional[List[float]]:
    """A list of numbers, e.g. check_times or times."""
    values = source.get(key, default)
    if values is None:
        return None
    if isinstance(values, (str, bytes, dict)) or not hasattr(values, "__iter__"):
        raise ConfigError(f"'{key}' must be a list of numbers, got {values!r}")
    numbers = [config_number({key: v}, key, None) for v in values]
    if None in numbers:
        raise ConfigError(f"'{key}' must be a list of numbers, got {values!r}")
    return numbers


def config_state(source: Dict[str, Any], d: int) -> int:
    state = config_number(source, "initial_state", 0, int)
    if not 0 <= state < d:
        raise ConfigError(f"'initial_state' must lie in 0..{d - 1}, got {state}")
    return state


@dataclass
class RunConfig:
    command: str
    horizon: float
    step: float
    n_paths: int
    seed: int
    tol: float
    out: Optional[Path]
    quiet: bool = False
    variant: Optional[str] = None
    raw: Dict[str, Any] = field(default_factory=dict)
    base_dir: Optional[Path] = None

    @classmethod
    def from_sources(cls, command: str, config: Dict[str, Any], flags: Dict[str, Any]) -> "RunConfig":
        merged = merge_flags(config, {k: v for k, v in flags.items() if k not in ("quiet", "variant")})
        horizon = config_number(merged, "horizon", 1.0)
        step = config_number(merged, "step", None) or default_step(horizon)
        n_paths = config_number(merged, "paths", DEFAULTS["n_paths"], int)
        if not horizon > 0:
            raise ConfigError(f"horizon must be positive, got {horizon}")
        if not step > 0:
            raise ConfigError(f"step must be positive, got {step}")
        if command in MC_COMMANDS and n_paths < DEFAULTS["min_paths"]:
            raise ConfigError(f"Monte Carlo needs at least {DEFAULTS['min_paths']} paths, got {n_paths}")
        base = merged.get("_base_dir")
        return cls(
            command=command,
            horizon=horizon,
            step=step,
            n_paths=n_paths,
            seed=config_number(merged, "seed", DEFAULTS["seed"], int),
            tol=config_number(merged, "tol", DEFAULTS["tol"]),
            out=Path(merged["out"]) if merged.get("out") else None,
            quiet=bool(flags.get("quiet")),
            variant=flags.get("variant"),
            raw=merged,
            base_dir=Path(base) if base else None,
        )

    def say(self, line: str = ""):
        if not self.quiet:
            print(line)

    def output(self, default_name: str) -> Path:
        return self.out if self.out is not None else get_path(default_name)


# =============================================================================
# Input helpers
# =============================================================================

def _document(cfg: RunConfig, key: str) -> Any:
    value = cfg.raw.get(key)
    if value is None:
        raise ConfigError(f"config needs a '{key}' entry (file path or inline object)")
    if isinstance(value, str):
        with open(resolve_input(value, cfg.base_dir)) as f:
            return json.load(f)
    return value


def load_model_from(cfg: RunConfig) -> ModelSpec:
    if cfg.raw.get("preset"):
        name = cfg.raw["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset '{name}' (known: {', '.join(PRESETS)})")
        return PRESETS[name].to_model()
    return ModelSpec.from_dict(_document(cfg, "model"))


def load_change_from(cfg: RunConfig, spec: ModelSpec) -> MeasureChangeSpec:
    if cfg.raw.get("change") is None:
        return MeasureChangeSpec.identity(spec.d)
    return MeasureChangeSpec.from_dict(_document(cfg, "change"))


def load_problem_from(cfg: RunConfig) -> MemmProblem:
    if cfg.raw.get("problem") is not None:
        p = cfg.raw["problem"]
        if not isinstance(p, dict):
            raise ConfigError("'problem' must be an object with lambda, c, h and sigma")
        missing = [k for k in ("lambda", "c", "h", "sigma") if k not in p]
        if missing:
            raise ConfigError(f"problem needs lambda, c, h and sigma (missing {', '.join(missing)})")
        lam, c, h, sigma = (config_numbers(p, k) for k in ("lambda", "c", "h", "sigma"))
        return MemmProblem(lam=lam, c=c, h=h, sigma=sigma)
    return MemmProblem.from_model(load_model_from(cfg))


def _write_json(data: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return path


def _ruler(cfg: RunConfig, title: str):
    cfg.say("=" * 60)
    cfg.say(title)
    cfg.say("=" * 60)


def _check_line(cfg: RunConfig, what: str, estimate, reference: float):
    z = abs(estimate.estimate - reference) / estimate.std_error if estimate.std_error > 0 else (
        0.0 if estimate.estimate == reference else float("inf"))
    tag = "[CHECK]" if z <= 3.0 else "[WARNING]"
    cfg.say(f"   {tag} {what}: MC {estimate.estimate:.6g} +- {estimate.std_error:.2g} "
            f"vs {reference:.6g} ({z:.2f} SE)")


# =============================================================================
# Commands
# =============================================================================

def cmd_validate(cfg: RunConfig) -> int:
    spec = load_model_from(cfg)
    report = validate_model(spec, cfg.horizon)
    if cfg.raw.get("change") is not None:
        change = load_change_from(cfg, spec)
        report = report.merged(validate_change(spec, change, cfg.horizon, tol=cfg.tol, step=cfg.step))
    if cfg.out is not None:
        _write_json(report.to_dict(), cfg.out)
    if report.ok:
        cfg.say(f"[OK] Valid on [0, {cfg.horizon:g}]")
        return 0
    print(f"[ERROR] Rejected: {len(report.violations)} violation(s):")
    for v in report.violations:
        print(f"   - {v}")
    return 1


def cmd_simulate(cfg: RunConfig) -> int:
    spec = load_model_from(cfg)
    i0 = config_state(cfg.raw, spec.d)
    n = config_number(cfg.raw, "dump_paths", min(cfg.n_paths, 10), int)
    paths = list(path_generator(spec, i0, cfg.horizon, cfg.step, cfg.seed, n))
    out = write_paths_csv(paths, cfg.output("paths.csv"))
    cfg.say(f"[SAVE] {n} path(s) on [0, {cfg.horizon:g}] -> {out}")
    return 0


def _mc_enabled(cfg: RunConfig) -> bool:
    return bool(cfg.raw.get("monte_carlo") or cfg.raw.get("paths"))


def _check_times(cfg: RunConfig, grid: np.ndarray) -> List[float]:
    times = config_numbers(cfg.raw, "check_times", [cfg.horizon])
    return [float(grid[np.argmin(np.abs(grid - t))]) for t in times]


def cmd_expectation(cfg: RunConfig) -> int:
    spec = load_model_from(cfg)
    report = validate_model(spec, cfg.horizon)
    if not report.ok:
        raise InvariantViolation(report, "model rejected")
    mu = solve_mu(spec, cfg.horizon, cfg.step)
    out = mu.to_csv(cfg.output("mu.csv"))
    cfg.say(f"[SAVE] mu_i(t) on {len(mu.grid)} grid points -> {out}")

    if _mc_enabled(cfg):
        _ruler(cfg, "MONTE CARLO CHECK (terminal X)")
        for i in range(spec.d):
            rows = []
            for t in _check_times(cfg, mu.grid):
                est = mc_expectation(spec, i, Functional.TERMINAL_X, t, cfg.n_paths, cfg.seed)
                _check_line(cfg, f"regime {i + 1}, t={t:g}", est, float(mu.at(t)[i]))
                rows.append((t, est.estimate, est.std_error, est.n_paths))
            path = write_estimates_csv(rows, out.with_name(f"{out.stem}_mc_regime{i + 1}.csv"))
            cfg.say(f"[SAVE] {path}")
    return 0


def cmd_entropy(cfg: RunConfig) -> int:
    spec = load_model_from(cfg)
    change = load_change_from(cfg, spec)
    H = solve_entropy(spec, change, cfg.horizon, cfg.step)
    out = H.to_csv(cfg.output("entropy.csv"))
    cfg.say(f"[SAVE] H_i(t) on {len(H.grid)} grid points -> {out}")

    try:
        coef = constant_entropy_coefficients(spec, change)
    except (SpecError, PreconditionError):
        coef = None
    if coef is not None:
        closed = np.array(coef.entropy(H.grid))
        err = float(np.max(np.abs(closed - H.values)))
        cfg.say(f"[STATS] closed form: B={coef.B:.6g}, A1={coef.A1:.6g}, A2={coef.A2:.6g}; "
                f"max |Volterra - closed| = {err:.3g}")

    if _mc_enabled(cfg):
        spec_Q = apply_girsanov(spec, change, horizon=cfg.horizon, step=cfg.step)
        _ruler(cfg, "MONTE CARLO CHECK (entropy integrand under Q)")
        for i in range(spec.d):
            rows = []
            for t in _check_times(cfg, H.grid):
                est = mc_expectation(spec_Q, i, Functional.TERMINAL_ENTROPY_INTEGRAND, t,
                                     cfg.n_paths, cfg.seed, change=change)
                _check_line(cfg, f"regime {i + 1}, t={t:g}", est, float(H.at(t)[i]))
                rows.append((t, est.estimate, est.std_error, est.n_paths))
            path = write_estimates_csv(rows, out.with_name(f"{out.stem}_mc_regime{i + 1}.csv"))
            cfg.say(f"[SAVE] {path}")
    return 0


def cmd_girsanov(cfg: RunConfig) -> int:
    spec = load_model_from(cfg)
    change = load_change_from(cfg, spec)
    spec_Q = apply_girsanov(spec, change, horizon=cfg.horizon, step=cfg.step, tol=cfg.tol)
    out = save_model(spec_Q, cfg.output("model_Q.json"))
    cfg.say(f"[SAVE] Q-model -> {out}")
    return 0


def cmd_esscher(cfg: RunConfig) -> int:
    spec = load_model_from(cfg)
    _, change = esscher_transform(spec, cfg.horizon, cfg.step)
    out = save_change(change, cfg.output("esscher_change.json"))
    cfg.say(f"[SAVE] Esscher change -> {out}")
    return 0


def cmd_telegraph(cfg: RunConfig) -> int:
    spec = load_model_from(cfg)
    result = jump_telegraph_unique_measure(spec, cfg.horizon, cfg.step)
    if isinstance(result, NoMeasure):
        print(f"[ERROR] Rejected: {result}")
        return 1
    out = save_change(result, cfg.output("telegraph_change.json"))
    cfg.say(f"[SAVE] jump-telegraph martingale measure -> {out}")
    return 0


def cmd_memm(cfg: RunConfig) -> int:
    problem = load_problem_from(cfg)
    variant = cfg.variant or cfg.raw.get("variant", "short")
    if variant == "short":
        sol = solve_short_term(problem)
        out = _write_json(sol.to_dict(), cfg.output("memm_short.json"))
    elif variant == "long":
        sol = solve_long_term(problem)
        out = _write_json(sol.to_dict(), cfg.output("memm_long.json"))
    elif variant == "horizon":
        times = config_numbers(cfg.raw, "times")
        state = config_state(cfg.raw, 2)
        if times:
            rows = horizon_sweep(problem, times, initial_state=state)
            out = write_sweep_csv(rows, cfg.output("memm_sweep.csv"))
            cfg.say(f"[SAVE] horizon sweep ({len(rows)} rows) -> {out}")
            return 0
        sols = [solve_horizon(problem, cfg.horizon, state) for state in (0, 1)]
        out = _write_json({"horizon": cfg.horizon, "solutions": [s.to_dict() for s in sols]},
                          cfg.output("memm_horizon.json"))
        sol = sols[state]
    else:
        raise ConfigError(f"unknown memm variant '{variant}' (short, long, horizon)")
    cfg.say(f"[STATS] lambda* = ({sol.lambda_star[0]:.10g}, {sol.lambda_star[1]:.10g}), "
            f"sigma* = ({sol.sigma_star[0]:.10g}, {sol.sigma_star[1]:.10g})")
    cfg.say(f"[SAVE] {variant} MEMM -> {out}")
    return 0


def cmd_levy(cfg: RunConfig) -> int:
    p = cfg.raw.get("levy") or cfg.raw
    if not isinstance(p, dict):
        raise ConfigError("'levy' must be an object with c, h, sigma and lambda")
    missing = [k for k in ("c", "h", "sigma", "lambda") if p.get(k) is None]
    if missing:
        raise ConfigError(f"levy needs c, h, sigma and lambda (missing {', '.join(missing)})")
    c, h, sigma, lam = (config_number(p, k, None) for k in ("c", "h", "sigma", "lambda"))
    sol = solve_levy(c, h, sigma, lam, tol=config_number(cfg.raw, "root_tol", DEFAULTS["root_tol"]))
    out = _write_json(sol._asdict(), cfg.output("levy.json"))
    cfg.say(f"[STATS] beta* = {sol.beta_star:.12g}, lambda* = {sol.lambda_star:.12g}, "
            f"slope = {sol.entropy_slope:.12g}")
    cfg.say(f"[SAVE] -> {out}")
    return 0


def cmd_figures(cfg: RunConfig) -> int:
    times = config_numbers(cfg.raw, "times", FIGURE_TIMES)
    rows = horizon_sweep(FIGURE_ONE, times, initial_state=0)
    out = write_sweep_csv(rows, cfg.output("figure_sweep.csv"))
    _ruler(cfg, "HORIZON SWEEP (preset problem)")
    cfg.say(f"[STATS] {len(rows)} horizons from {times[0]:g} to {times[-1]:g}")
    cfg.say(f"[SAVE] -> {out}")
    return 0


HANDLERS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "expectation": cmd_expectation,
    "entropy": cmd_entropy,
    "girsanov": cmd_girsanov,
    "esscher": cmd_esscher,
    "telegraph-measure": cmd_telegraph,
    "memm": cmd_memm,
    "levy": cmd_levy,
    "figures": cmd_figures,
}


def run(command: str, config_file: Optional[str] = None, flags: Optional[Dict[str, Any]] = None) -> int:
    """
    Run one command.

    Returns:
        0 on success; 1 when the inputs parse but the model, change or solver
        rejects them ("[ERROR] Rejected: ..."); 2 when the inputs cannot be read
        or are mistyped ("[ERROR] Input: ..."). Anything else is a bug and propagates.
    """
    flags = dict(flags or {})
    if command not in HANDLERS:
        print(f"[ERROR] Input: unknown command '{command}' (known: {', '.join(COMMANDS)})")
        return 2
    try:
        config = load_config_file(config_file) if config_file else {}
        cfg = RunConfig.from_sources(command, config, flags)
        return HANDLERS[command](cfg)
    except (InvariantViolation, InaccessibleMeasureError, DomainError, HorizonConvergenceError) as e:
        print(f"[ERROR] Rejected: {e}")
        return 1
    except (SpecError, ConfigError, PreconditionError, json.JSONDecodeError,
            OSError, SwitchLimitError) as e:
        print(f"[ERROR] Input: {e}")
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jump-diffusion",
        description="Regime-switching jump-diffusion toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python cli.py validate --config run.json                 # model + change invariants
  python cli.py expectation --config run.json --paths 20000
  python cli.py entropy --config run.json --horizon 5 --step 0.00122
  python cli.py memm long --config run.json                # long-term MEMM as JSON
  python cli.py figures --out figure_sweep.csv             # preset horizon sweep
        """
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(p):
        p.add_argument('--config', type=str, default=None, help='JSON run-config file')
        p.add_argument('--horizon', type=float, default=None, help='Working horizon T')
        p.add_argument('--step', type=float, default=None, help='Grid step (default: T/2048)')
        p.add_argument('--paths', type=int, default=None, help='Monte Carlo path count')
        p.add_argument('--seed', type=int, default=None, help='RNG seed')
        p.add_argument('--tol', type=float, default=None, help='Check tolerance (default: 1e-9)')
        p.add_argument('--out', type=str, default=None, help='Output file')
        p.add_argument('--quiet', action='store_true', help='Only print errors')

    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "memm":
            p.add_argument('variant', choices=['short', 'long', 'horizon'])
        common(p)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {
        "horizon": args.horizon, "step": args.step, "paths": args.paths, "seed": args.seed,
        "tol": args.tol, "out": args.out, "quiet": args.quiet,
        "variant": getattr(args, "variant", None),
    }
    return run(args.command, args.config, flags)


if __name__ == '__main__':
    sys.exit(main())
