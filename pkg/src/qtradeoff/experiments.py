"""Config-driven epsilon sweeps, scaling fits, pricing translation and output files."""

from __future__ import annotations

import configparser
import csv
import enum
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import linregress

from .chain import evaluate_policy, metrics, stationary_distribution
from .errors import ConfigError, DomainError, FitError, QueueControlError
from .policies import (
    fully_dynamic_policy,
    static_near_capacity_policy,
    throughput_threshold_policy,
    two_arrival_policy,
    two_support_threshold_policy,
)
from .reward import FluidSolution, RewardFunction, fluid_benchmark
from .simulate import simulate

CSV_HEADER = ("family", "eps", "param_json", "expected_queue", "reward", "regret",
              "regret_ratio", "source")
DEFAULT_EPS_GRID = (0.001, 0.004, 0.007, 0.01, 0.025, 0.04, 0.055, 0.07, 0.085, 0.1)
FAMILY_TYPES = ("two_arrival", "fully_dynamic", "two_support_threshold",
                "throughput_threshold", "static_near_capacity")


@dataclass
class TradeoffPoint:
    family: str
    eps: float
    params: dict
    expected_queue: float
    reward: float
    regret: float
    regret_ratio: float
    source: str = "exact"

    @property
    def skipped(self) -> bool:
        return "skipped" in self.params


class FitModel(enum.Enum):
    POWER_LAW = "powerlaw"
    LOGARITHMIC = "logarithmic"


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit of queue length against ``log(1/regret)``.

    For ``POWER_LAW`` the slope is the exponent ``a`` in ``E[q] ~ (1/R)^a``;
    for ``LOGARITHMIC`` it is the coefficient of ``log(1/R)``.
    """

    model: FitModel
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    family: str


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class FamilySpec:
    label: str
    type: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SimulationSettings:
    horizon: float = 1e5
    warmup_fraction: float = 0.2
    replications: int = 20
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    reward: RewardFunction
    eps: tuple
    families: tuple
    mode: str = "exact"
    simulation: SimulationSettings = SimulationSettings()
    workers: int = 1
    csv_name: str = "sweep.csv"
    svg_name: str = "sweep.svg"
    log_y: bool = False
    title: str = ""


def _floats(text: str) -> list[float]:
    return [float(t) for t in re.split(r"[,\s]+", text.strip()) if t]


def reward_from_mapping(kind: str, values: dict, lambda_max: float) -> RewardFunction:
    """Build a reward from a kind name and string-valued parameters."""
    try:
        if kind == "quadratic":
            return RewardFunction.quadratic(float(values.get("a", 0)), float(values.get("b", 0)),
                                            float(values.get("c", 0)), lambda_max)
        if kind == "power":
            return RewardFunction.power(float(values["exponent"]), lambda_max,
                                        float(values.get("scale", 1)))
        if kind == "linear":
            return RewardFunction.linear(float(values.get("slope", 1)), lambda_max)
        if kind == "polynomial":
            return RewardFunction.polynomial(_floats(values["coefficients"]), lambda_max)
        if kind == "tabulated":
            return RewardFunction.tabulated(_floats(values["x"]), _floats(values["y"]),
                                            values.get("rule", "linear"), lambda_max)
    except KeyError as exc:
        raise ConfigError(f"reward kind {kind!r} needs parameter {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise ConfigError(f"bad reward parameter: {exc}") from None
    raise ConfigError(f"unknown reward kind {kind!r}")


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return None


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse an INI experiment file.

    Sections: ``[reward]`` (``kind``, ``lambda_max`` and kind parameters),
    ``[sweep]`` (``eps``, ``mode``, ``workers``, optional ``families``),
    one ``[family.<label>]`` per curve with a ``type`` key, and optional
    ``[simulation]`` and ``[output]``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    def fail(section, key, msg):
        line = _line_of(text, section, key)
        where = f"{source}:{line}" if line else f"{source} [{section}]"
        raise ConfigError(f"{where}: {key}: {msg}")

    def get(section, key, conv, default=None):
        if not cp.has_option(section, key):
            if default is None:
                fail(section, key, "missing required key")
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            fail(section, key, f"cannot parse {raw!r} ({exc})")

    if not cp.has_section("reward"):
        raise ConfigError(f"{source}: missing [reward] section")
    values = dict(cp.items("reward"))
    kind = values.pop("kind", None)
    if kind is None:
        fail("reward", "kind", "missing required key")
    lmax = get("reward", "lambda_max", float, None if kind != "tabulated" else math.nan)
    if kind == "tabulated" and math.isnan(lmax):
        lmax = _floats(values["x"])[-1]
    values.pop("lambda_max", None)
    try:
        reward = reward_from_mapping(kind, values, lmax)
    except (ConfigError, DomainError) as exc:
        raise ConfigError(f"{source} [reward]: {exc}") from None

    eps = tuple(DEFAULT_EPS_GRID)
    mode, workers = "exact", 1
    listed = None
    if cp.has_section("sweep"):
        eps = tuple(get("sweep", "eps", _floats, list(DEFAULT_EPS_GRID)))
        if any(not e > 0 for e in eps):
            fail("sweep", "eps", "values must be positive")
        mode = get("sweep", "mode", str.strip, "exact")
        if mode not in ("exact", "simulated", "both"):
            fail("sweep", "mode", "expected exact, simulated or both")
        workers = get("sweep", "workers", int, 1)
        if cp.has_option("sweep", "families"):
            listed = [s for s in re.split(r"[,\s]+", cp.get("sweep", "families")) if s]

    families = []
    labels = [s[len("family."):] for s in cp.sections() if s.startswith("family.")]
    for label in labels if listed is None else listed:
        sec = f"family.{label}"
        if not cp.has_section(sec):
            fail("sweep", "families", f"no section [{sec}]")
        ftype = get(sec, "type", str.strip)
        if ftype not in FAMILY_TYPES:
            fail(sec, "type", f"unknown family type (expected one of {', '.join(FAMILY_TYPES)})")
        params = {}
        for key in cp.options(sec):
            if key != "type":
                params[key] = get(sec, key, float)
        families.append(FamilySpec(label, ftype, params))

    sim = SimulationSettings()
    if cp.has_section("simulation"):
        sim = SimulationSettings(
            get("simulation", "horizon", float, sim.horizon),
            get("simulation", "warmup_fraction", float, sim.warmup_fraction),
            get("simulation", "replications", int, sim.replications),
            get("simulation", "seed", int, sim.seed),
        )
    csv_name, svg_name, log_y, title = "sweep.csv", "sweep.svg", False, ""
    if cp.has_section("output"):
        csv_name = cp.get("output", "csv", fallback=csv_name)
        svg_name = cp.get("output", "svg", fallback=svg_name)
        log_y = get("output", "log_y", lambda s: cp.BOOLEAN_STATES[s.lower()], False)
        title = cp.get("output", "title", fallback="")
    return ExperimentConfig(reward, eps, tuple(families), mode, sim, workers,
                            csv_name, svg_name, log_y, title)


# -- sweep --------------------------------------------------------------------


def build_family_policy(spec: FamilySpec, f: RewardFunction, sol: FluidSolution, eps: float):
    """Construct the policy of family ``spec`` tuned for ``eps``."""
    t = spec.type
    if t == "two_arrival":
        return two_arrival_policy(f, eps)
    if t == "fully_dynamic":
        return fully_dynamic_policy(f, eps, spec.params.get("k", 2.0))
    if t == "two_support_threshold":
        return two_support_threshold_policy(sol, f, eps)
    if t == "throughput_threshold":
        return throughput_threshold_policy(f.lambda_max, eps)
    if t == "static_near_capacity":
        return static_near_capacity_policy(f, sol.f_star, eps)
    raise ConfigError(f"unknown family type {t!r}")


def _cell_seed(seed: int, index: int) -> int:
    state = np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _evaluate_cell(spec: FamilySpec, f: RewardFunction, sol: FluidSolution, eps: float,
                   mode: str, sim: SimulationSettings, index: int) -> list[TradeoffPoint]:
    f_one = float(f(1.0)) if f.lambda_max >= 1 else float(f(f.lambda_max))
    try:
        p = build_family_policy(spec, f, sol, eps)
    except QueueControlError as exc:
        nan = math.nan
        params = dict(spec.params, skipped=f"{type(exc).__name__}: {exc}")
        return [TradeoffPoint(spec.label, eps, params, nan, nan, nan, nan, "exact")]
    params = {k: (float(v) if isinstance(v, (int, float)) else v) for k, v in p.params}
    params.setdefault("lambda_max", f.lambda_max)
    out = []
    if mode in ("exact", "both"):
        m = evaluate_policy(p, f, sol.f_star)
        out.append(TradeoffPoint(spec.label, eps, params, m.expected_queue, m.reward, m.regret,
                                 m.regret / f_one if f_one > 0 else math.nan, "exact"))
    if mode in ("simulated", "both"):
        est = simulate(p, f, sim.horizon, sim.warmup_fraction, sim.replications,
                       _cell_seed(sim.seed, index))
        regret = sol.f_star - est.mean_reward
        sp = dict(params, se_queue=est.se_queue, se_reward=est.se_reward)
        out.append(TradeoffPoint(spec.label, eps, sp, est.mean_queue, est.mean_reward, regret,
                                 regret / f_one if f_one > 0 else math.nan, "simulated"))
    return out


def sweep(config: ExperimentConfig) -> list[TradeoffPoint]:
    """Evaluate every ``(family, eps)`` cell; rows come out in config order.

    Cells whose construction fails are kept as rows with NaN metrics and a
    ``skipped`` entry holding the reason.
    """
    solutions: dict[float, tuple[RewardFunction, FluidSolution]] = {}

    def reward_for(spec: FamilySpec):
        lmax = spec.params.get("lambda_max", config.reward.lambda_max)
        if lmax not in solutions:
            f = config.reward if lmax == config.reward.lambda_max else config.reward.with_lambda_max(lmax)
            solutions[lmax] = (f, fluid_benchmark(f))
        return solutions[lmax]

    cells = []
    for spec in config.families:
        f, sol = reward_for(spec)
        for e in config.eps:
            cells.append((spec, f, sol, e, config.mode, config.simulation, len(cells)))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(lambda c: _evaluate_cell(*c), cells))
    else:
        rows = [_evaluate_cell(*c) for c in cells]
    return [pt for r in rows for pt in r]


# -- fitting ------------------------------------------------------------------


def fit_scaling(points: Iterable[TradeoffPoint], model: FitModel | str = FitModel.POWER_LAW,
                family: str | None = None, max_eps: float | None = 0.01,
                source: str = "exact") -> ScalingFit:
    """Fit ``E[q]`` against the realised regret of one family.

    Only rows with ``eps <= max_eps`` (all rows when ``None``) and positive
    finite regret take part; at least four are required.
    """
    model = FitModel(model)
    pts = [p for p in points if p.source == source and not p.skipped]
    names = sorted({p.family for p in pts})
    if family is None:
        if len(names) != 1:
            raise FitError(f"points span families {names}; name one to fit")
        family = names[0]
    pts = [p for p in pts if p.family == family and (max_eps is None or p.eps <= max_eps)
           and math.isfinite(p.regret) and p.regret > 0 and math.isfinite(p.expected_queue)]
    if len(pts) < 4:
        raise FitError(f"need at least 4 usable points for {family!r}, got {len(pts)}")
    x = np.log(1.0 / np.array([p.regret for p in pts]))
    y = np.array([p.expected_queue for p in pts])
    if np.ptp(x) <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        raise FitError("all regrets are identical; the fit abscissa is degenerate")
    if model is FitModel.POWER_LAW:
        if np.any(y <= 0):
            raise FitError("power-law fit needs positive queue lengths")
        y = np.log(y)
    res = linregress(x, y)
    r2 = float(min(max(res.rvalue ** 2, 0.0), 1.0))
    return ScalingFit(model, float(res.slope), float(res.intercept), r2, len(pts), family)


# -- pricing ------------------------------------------------------------------


@dataclass(frozen=True)
class PricingBound:
    """Revenue-loss bound for a market of size ``n`` with waiting cost ``h``.

    ``eps`` balances the two terms of ``n eps + 4 h C / sqrt(eps)``, so
    ``objective`` equals ``loss_bound``.  ``minimiser`` is the exact
    minimiser ``(2 h C / n)**(2/3)`` and ``minimum`` its value.
    ``exact_loss`` is ``n R + h E[q lambda(q)]`` for the fully dynamic policy
    at ``eps`` when a reward is supplied.
    """

    eps: float
    loss_bound: float
    objective: float
    minimiser: float
    minimum: float
    exact_loss: float | None = None


def revenue_loss(p, f: RewardFunction, f_star: float, n: float, h: float) -> float:
    """``n * regret + h * E[q lambda(q)]`` for policy ``p``."""
    d = stationary_distribution(p)
    m = metrics(p, d, f, f_star)
    Q = d.truncation_level
    q = np.arange(Q + 1, dtype=float)
    rates = p.rates_upto(Q + 1)
    ql = math.fsum(q * rates * d.probabilities)
    if d.tail is not None and d.tail_mass > 0:
        rho = d.tail.ratio
        ql += rho * (d.tail.start * d.tail_mass + d.probabilities[Q] * rho / (1 - rho) ** 2)
    return n * m.regret + h * ql


def pricing_loss(h: float, n: float, c_bound: float, f: RewardFunction | None = None) -> PricingBound:
    if not (h > 0 and c_bound > 0):
        raise DomainError("h and C must be positive")
    if not n >= 1:
        raise DomainError("market size n must be at least 1")
    a = 4 * h * c_bound
    eps = (a / n) ** (2 / 3)
    bound = 2 * a ** (2 / 3) * n ** (1 / 3)
    objective = n * eps + a / math.sqrt(eps)
    best = (2 * h * c_bound / n) ** (2 / 3)
    exact = None
    if f is not None:
        sol = fluid_benchmark(f)
        exact = revenue_loss(fully_dynamic_policy(f, eps), f, sol.f_star, n, h)
    return PricingBound(eps, bound, objective, best, n * best + a / math.sqrt(best), exact)


# -- output -------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_csv(points: Sequence[TradeoffPoint], path: str | Path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for p in points:
                w.writerow([p.family, _fmt(p.eps), json.dumps(p.params, sort_keys=True),
                            _fmt(p.expected_queue), _fmt(p.reward), _fmt(p.regret),
                            _fmt(p.regret_ratio), p.source])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV: {exc.strerror}", str(path)) from None
    return path


def read_csv(path: str | Path) -> list[TradeoffPoint]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ConfigError(f"{path}: unexpected CSV header")
    out = []
    for no, r in enumerate(rows[1:], 2):
        try:
            out.append(TradeoffPoint(r[0], float(r[1]), json.loads(r[2]), float(r[3]), float(r[4]),
                                     float(r[5]), float(r[6]), r[7]))
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}:{no}: malformed row ({exc})") from None
    return out


def emit_fits_csv(fits: Sequence[ScalingFit], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("family", "model", "slope", "intercept", "r_squared", "n_points"))
        for fit in fits:
            w.writerow([fit.family, fit.model.value, _fmt(fit.slope), _fmt(fit.intercept),
                        _fmt(fit.r_squared), fit.n_points])
    return path


def emit_svg(points: Sequence[TradeoffPoint], path: str | Path, log_y: bool = False,
             title: str = "", percent: bool = True) -> Path:
    """Line chart of ``E[q]`` against regret ratio, one series per family and source."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    series: dict[str, list[tuple[float, float]]] = {}
    for p in points:
        if p.skipped or not (math.isfinite(p.regret_ratio) and math.isfinite(p.expected_queue)):
            continue
        name = p.family if p.source == "exact" else f"{p.family} ({p.source})"
        series.setdefault(name, []).append((p.regret_ratio, p.expected_queue))

    scale = 100.0 if percent else 1.0
    with plt.rc_context({"svg.hashsalt": "qtradeoff", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for name, xy in series.items():
            xy.sort()
            ax.plot([a * scale for a, _ in xy], [b for _, b in xy], marker="o", ms=3, label=name)
        ax.set_xlabel("regret ratio (%)" if percent else "regret ratio")
        ax.set_ylabel("expected queue length")
        if log_y:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        if series:
            ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(exc.errno, f"cannot write SVG: {exc.strerror}", str(path)) from None
        finally:
            plt.close(fig)
    return path


def interpolate_at_queue(points: Sequence[TradeoffPoint], family: str, target: float,
                         source: str = "exact") -> float:
    """Regret ratio of ``family`` at ``E[q] = target`` by linear interpolation."""
    xy = sorted((p.expected_queue, p.regret_ratio) for p in points
                if p.family == family and p.source == source and not p.skipped)
    if not xy or not xy[0][0] <= target <= xy[-1][0]:
        raise DomainError(f"E[q] = {target} outside the {family!r} curve")
    e = np.array([a for a, _ in xy])
    r = np.array([b for _, b in xy])
    return float(np.interp(target, e, r))
