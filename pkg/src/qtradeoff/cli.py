"""Command-line entry point: ``qtradeoff <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import math
import sys
from pathlib import Path

import numpy as np

from .chain import evaluate_policy
from .errors import ConfigError, NoMajorantError, QueueControlError
from .experiments import (
    FAMILY_TYPES,
    FamilySpec,
    SimulationSettings,
    build_family_policy,
    emit_csv,
    emit_fits_csv,
    emit_svg,
    fit_scaling,
    load_config,
    pricing_loss,
    read_csv,
    reward_from_mapping,
    sweep,
)
from .policies import lower_bound_for
from .reward import (
    RewardFunction,
    derivative,
    fluid_benchmark,
    polyhedral_check,
    quadratic_majorant,
    tangent_majorization_check,
)
from .simulate import simulate


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()
                if k not in ("policy", "witness")}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _emit(result: dict, args, name: str) -> None:
    text = json.dumps(_jsonable(result), indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text + "\n")


def parse_reward_spec(spec: str, lambda_max: float | None) -> RewardFunction:
    """``"quadratic a=-1 b=5"`` style reward description."""
    parts = spec.split()
    if not parts:
        raise ConfigError("empty reward specification")
    values = {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise ConfigError(f"reward parameter {tok!r} is not key=value")
        k, v = tok.split("=", 1)
        values[k] = v
    lmax = lambda_max
    if lmax is None:
        if "lambda_max" in values:
            lmax = float(values.pop("lambda_max"))
        elif parts[0] == "tabulated":
            lmax = float(values["x"].split(",")[-1])
        else:
            raise ConfigError("give --lambda-max (or lambda_max=... in the reward spec)")
    values.pop("lambda_max", None)
    return reward_from_mapping(parts[0], values, lmax)


def _reward(args) -> RewardFunction:
    if getattr(args, "reward", None):
        return parse_reward_spec(args.reward, args.lambda_max)
    if getattr(args, "config", None):
        f = load_config(args.config).reward
        if args.lambda_max is not None:
            f = f.with_lambda_max(args.lambda_max)
        return f
    raise ConfigError("give --reward or --config")


def _eps_list(text: str | None):
    if text is None:
        return None
    return [float(t) for t in text.replace(",", " ").split()]


def cmd_benchmark(args) -> None:
    f = _reward(args)
    sol = fluid_benchmark(f, tol=args.tol, ambiguous=args.ambiguous)
    result = {"reward": repr(f), "solution": sol}
    if sol.is_two_point:
        result["dual_certificate"] = polyhedral_check(f, sol)
    else:
        result["tangent_check"] = tangent_majorization_check(f)
        try:
            result["quadratic_majorant"] = quadratic_majorant(f)._asdict()
        except NoMajorantError as exc:
            result["quadratic_majorant"] = f"none: {exc}"
        result["second_derivative_at_1"] = derivative(f, 1.0, 2)
    _emit(result, args, "benchmark")


def _policy_from_args(args):
    f = _reward(args)
    sol = fluid_benchmark(f)
    params = {}
    if args.k is not None:
        params["k"] = args.k
    spec = FamilySpec(args.family, args.family, params)
    eps = _eps_list(args.eps)
    if not eps or len(eps) != 1:
        raise ConfigError("give exactly one value with --eps")
    return f, sol, build_family_policy(spec, f, sol, eps[0]), eps[0]


def cmd_eval(args) -> None:
    f, sol, p, eps = _policy_from_args(args)
    if args.simulate:
        est = simulate(p, f, args.horizon, args.warmup, args.replications, args.seed)
        result = {"family": p.family, "eps": eps, "params": dict(p.params), "estimate": est,
                  "regret": sol.f_star - est.mean_reward}
    else:
        m = evaluate_policy(p, f, sol.f_star)
        result = {"family": p.family, "eps": eps, "params": dict(p.params), "metrics": m,
                  "regret_ratio": m.regret / float(f(1.0))}
    _emit(result, args, "eval")


def cmd_simulate(args) -> None:
    args.simulate = True
    cmd_eval(args)


def cmd_sweep(args) -> None:
    cfg = load_config(args.config)
    changes = {}
    eps = _eps_list(args.eps)
    if eps:
        changes["eps"] = tuple(eps)
    if args.simulate:
        changes["mode"] = "simulated"
    elif args.exact:
        changes["mode"] = "exact"
    if args.seed is not None:
        changes["simulation"] = dataclasses.replace(cfg.simulation, seed=args.seed)
    cfg = dataclasses.replace(cfg, **changes)
    points = sweep(cfg)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = emit_csv(points, out / cfg.csv_name)
    svg_path = emit_svg(points, out / cfg.svg_name, cfg.log_y, cfg.title)
    skipped = sum(p.skipped for p in points)
    print(f"wrote {len(points)} rows ({skipped} skipped) to {csv_path} and {svg_path}")


def cmd_bounds(args) -> None:
    f = _reward(args)
    sol = fluid_benchmark(f)
    eps = _eps_list(args.eps) or [0.01]
    rows = []
    for e in eps:
        lb = lower_bound_for(f, sol, e)
        rows.append({"eps": e, "regime": lb.regime, "q_lower": lb.q_lower,
                     "closed_form": lb.closed_form, "witness_states": int(lb.witness.size)})
    _emit({"reward": repr(f), "bounds": rows}, args, "bounds")


def cmd_fit(args) -> None:
    points = read_csv(args.csv)
    families = [args.family] if args.family else sorted({p.family for p in points if not p.skipped})
    fits = [fit_scaling(points, args.model, fam, None if args.max_eps <= 0 else args.max_eps,
                        args.source) for fam in families]
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        emit_fits_csv(fits, Path(args.out) / "fits.csv")
    print(json.dumps(_jsonable({"fits": fits}), indent=2, sort_keys=True))


def cmd_pricing(args) -> None:
    f = _reward(args) if (args.reward or args.config) else None
    res = pricing_loss(args.h, args.n, args.c, f)
    _emit({"h": args.h, "n": args.n, "C": args.c, "result": res}, args, "pricing")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtradeoff",
                                 description="Queue-length versus reward trade-offs for "
                                             "single-server queues with controlled arrivals.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, reward=True):
        p.add_argument("--config", help="INI experiment file")
        p.add_argument("--out", help="directory for output files")
        p.add_argument("--seed", type=int, default=None, help="64-bit simulation seed")
        p.add_argument("--eps", help="comma- or space-separated list of eps values")
        if reward:
            p.add_argument("--reward", help='reward spec, e.g. "quadratic a=-1 b=5"')
            p.add_argument("--lambda-max", type=float, default=None)

    p = sub.add_parser("benchmark", help="fluid benchmark, verdict and certificate")
    common(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--ambiguous", choices=("degenerate", "two_point"), default="degenerate")
    p.set_defaults(func=cmd_benchmark)

    for name, fn in (("eval", cmd_eval), ("simulate", cmd_simulate)):
        p = sub.add_parser(name, help="evaluate one policy" if name == "eval" else "simulate one policy")
        common(p)
        p.add_argument("--family", choices=FAMILY_TYPES, required=True)
        p.add_argument("--k", type=float, default=None, help="fully dynamic exponent")
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--exact", action="store_true")
        mode.add_argument("--simulate", action="store_true")
        sim = SimulationSettings()
        p.add_argument("--horizon", type=float, default=sim.horizon)
        p.add_argument("--warmup", type=float, default=sim.warmup_fraction)
        p.add_argument("--replications", type=int, default=sim.replications)
        p.set_defaults(func=fn)

    p = sub.add_parser("sweep", help="run an eps sweep from a config file")
    common(p, reward=False)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true")
    mode.add_argument("--simulate", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds", help="greedy lower bounds on E[q]")
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("fit", help="scaling fits on a sweep CSV")
    common(p, reward=False)
    p.add_argument("--csv", required=True)
    p.add_argument("--model", choices=("powerlaw", "logarithmic"), default="powerlaw")
    p.add_argument("--family")
    p.add_argument("--max-eps", type=float, default=0.01, help="fit window; <= 0 uses every row")
    p.add_argument("--source", choices=("exact", "simulated"), default="exact")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pricing", help="revenue-loss translation for a market of size n")
    common(p)
    p.add_argument("--h", type=float, required=True, help="waiting cost per unit queue")
    p.add_argument("--n", type=float, required=True, help="market size")
    p.add_argument("--c", type=float, required=True, help="constant C in E[q] <= C/sqrt(eps)")
    p.set_defaults(func=cmd_pricing)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is None and args.command in ("eval", "simulate"):
        args.seed = 0
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except (QueueControlError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
