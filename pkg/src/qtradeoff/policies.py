"""Closed-form policy constructions and greedy lower-bound witnesses."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .chain import EventuallyConstant, FiniteCutoff, Policy
from .errors import DomainError, InfeasibleParameterError, StructureError
from .reward import FluidSolution, RewardFunction, derivative, evaluate

DEFAULT_EPS0 = 0.025


def snap_ceil(x: float, atol: float = 1e-9) -> int:
    """Ceiling that treats values within ``atol`` of an integer as that integer.

    Keeps thresholds such as ``ceil(log(2) / log(2) - 1)`` from jumping a
    whole state because of rounding in the last bit.
    """
    r = round(x)
    if abs(x - r) <= atol * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def _curvature(f: RewardFunction) -> float:
    f2 = derivative(f, 1.0, 2)
    if not f2 < 0:
        raise DomainError(f"construction needs F''(1) < 0, got {f2:g}")
    return f2


def _check_eps(eps: float, upper: float | None = None) -> None:
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if upper is not None and eps >= upper:
        raise DomainError(f"eps must be below {upper}, got {eps}")


def two_arrival_policy(f: RewardFunction, eps: float) -> Policy:
    """Rate ``1 + k1`` below the threshold ``tau`` and ``1 - k2`` from ``tau`` on."""
    _check_eps(eps, 1.0)
    a = -_curvature(f)
    root = math.sqrt(eps / a)
    log_term = math.sqrt(math.log(1.0 / eps))
    k1 = root * log_term
    k2 = root / log_term
    tau = snap_ceil(0.5 * math.sqrt(a / eps) * log_term)
    if 1.0 + k1 > f.lambda_max:
        raise InfeasibleParameterError(
            f"high rate 1 + k1 = {1 + k1:.6g} exceeds lambda_max = {f.lambda_max}")
    if k2 > 1.0:
        raise InfeasibleParameterError(f"low rate 1 - k2 = {1 - k2:.6g} is negative")
    params = (("k1", k1), ("k2", k2), ("tau", tau))
    return Policy((1.0 + k1,) * tau, EventuallyConstant(1.0 - k2, tau), f.lambda_max,
                  "two_arrival", params)


def dynamic_policy(m: int, B: int, k: float = 2.0, lambda_max: float | None = None) -> Policy:
    """Gradual rise-and-fall policy with offset ``m``, centre ``B`` and cutoff ``2B``.

    ``lambda(q) = ((m+q+2)/(m+q+1))**k`` for ``q < B`` and
    ``((m+2B-q)/(m+2B-q+1))**k`` for ``B <= q < 2B``.
    """
    if k <= 1:
        raise DomainError(f"exponent k must exceed 1, got {k}")
    if m < 0 or B < 1:
        raise DomainError(f"need m >= 0 and B >= 1, got m={m}, B={B}")
    q = np.arange(2 * B, dtype=float)
    up = ((m + q + 2) / (m + q + 1)) ** k
    down = ((m + 2 * B - q) / (m + 2 * B - q + 1)) ** k
    rates = np.where(q < B, up, down)
    top = float(rates[0])
    if lambda_max is None:
        lambda_max = top
    if top > lambda_max * (1 + 1e-12):
        raise InfeasibleParameterError(f"lambda(0) = {top:.6g} exceeds lambda_max = {lambda_max}")
    rates = np.minimum(rates, lambda_max)
    return Policy(tuple(rates.tolist()), FiniteCutoff(2 * B), float(lambda_max), "fully_dynamic",
                  (("m", m), ("B", B), ("k", float(k))))


def general_k_constant(k: float) -> float:
    """``k^2 (k+1) / (2 (k-1)) + 1``; equals 7 at ``k = 2``."""
    if k <= 1:
        raise DomainError(f"exponent k must exceed 1, got {k}")
    return k * k * (k + 1) / (2 * (k - 1)) + 1


def canonical_offset(lambda_max: float) -> int:
    """Smallest offset ``m`` with ``((m+2)/(m+1))**2 <= lambda_max``."""
    if lambda_max <= 1:
        raise DomainError(f"lambda_max must exceed 1, got {lambda_max}")
    return snap_ceil(1.0 / (math.sqrt(lambda_max) - 1.0)) - 1


def fully_dynamic_policy(f: RewardFunction, eps: float, k: float = 2.0,
                         lambda_max: float | None = None) -> Policy:
    """Fully dynamic policy tuned for regret ``eps``.

    For ``k = 2`` the offset ``m`` adapts to ``lambda_max`` and
    ``B = ceil(sqrt(-7 F''(1) / eps))``.  Other exponents use ``m = 0`` and
    ``B = ceil(sqrt((-F''(1) / eps) * general_k_constant(k)))``.
    """
    _check_eps(eps)
    if k <= 1:
        raise DomainError(f"exponent k must exceed 1, got {k}")
    lmax = f.lambda_max if lambda_max is None else float(lambda_max)
    a = -_curvature(f)
    if k == 2:
        m = canonical_offset(lmax)
        B = snap_ceil(math.sqrt(7 * a / eps))
    else:
        m = 0
        B = snap_ceil(math.sqrt(a / eps * general_k_constant(k)))
    return dynamic_policy(m, max(B, 1), k, lmax)


def two_support_threshold_policy(sol: FluidSolution, f: RewardFunction, eps: float) -> Policy:
    """Rate ``x1`` up to and including ``tau``, then ``x2``.

    ``tau = ceil(log_{x1}(C / eps))`` with ``C = D + 2 sqrt(D)`` and
    ``D = F(x1) - F(x2)``.
    """
    if not sol.is_two_point:
        raise StructureError("threshold policy needs a two-point fluid solution")
    _check_eps(eps)
    x1, x2, _ = sol.support()
    d = float(evaluate(f, x1) - evaluate(f, x2))
    if d <= 0:
        raise StructureError(f"F(x1) - F(x2) = {d:g} <= 0 is not a valid two-point optimum")
    c = d + 2 * math.sqrt(d)
    tau = max(snap_ceil(math.log(c / eps) / math.log(x1)), 0)
    params = (("x1", x1), ("x2", x2), ("tau", tau), ("C", c))
    return Policy((x1,) * (tau + 1), EventuallyConstant(x2, tau + 1), f.lambda_max,
                  "two_support_threshold", params)


def throughput_threshold_policy(lambda_max: float, eps: float) -> Policy:
    """Admit at full rate ``lambda_max`` below ``tau``, refuse from ``tau`` on."""
    if lambda_max <= 1:
        raise DomainError(f"lambda_max must exceed 1, got {lambda_max}")
    _check_eps(eps)
    tau = max(snap_ceil(math.log((lambda_max - 1 + eps) / eps) / math.log(lambda_max) - 1), 0)
    if tau == 0:
        warnings.warn("threshold collapsed to 0: the policy admits nobody", stacklevel=2)
    return Policy((float(lambda_max),) * tau, FiniteCutoff(tau), float(lambda_max),
                  "throughput_threshold", (("lambda_max", float(lambda_max)), ("tau", tau)))


def static_near_capacity_policy(f: RewardFunction, f_star: float, eps: float) -> Policy:
    """Smallest constant rate ``c < 1`` with ``F(c) >= f_star - eps`` (by bisection)."""
    _check_eps(eps)
    target = f_star - eps
    lo, hi = 0.0, float(np.nextafter(1.0, 0.0))
    if f(hi) < target:
        raise InfeasibleParameterError(
            f"no static rate below 1 reaches F >= {target:.12g}; best is {float(f(hi)):.12g}")
    if f(lo) >= target:
        hi = lo
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if f(mid) >= target:
                hi = mid
            else:
                lo = mid
    p = Policy((), EventuallyConstant(hi, 0), max(f.lambda_max, hi), "static", (("c", hi),))
    return p


# -- lower bounds -----------------------------------------------------------


class Regime(enum.Enum):
    SMALL_MARKET = "small_market"
    CONCAVE_LIKE = "concave_like"
    NON_CONCAVE_LIKE = "non_concave_like"


@dataclass(frozen=True)
class LowerBoundResult:
    """Greedy witness for a relaxed queue-length minimisation.

    ``q_lower`` is the exact mean of the witness ``pi_hat``; ``closed_form``
    is the leading-order asymptotic value for comparison.
    """

    regime: Regime
    q_lower: float
    closed_form: float
    witness: np.ndarray
    caps: tuple


def greedy_fill(first_cap: float, growth: float, uniform_cap: float | None = None,
                max_states: int = 10_000_000) -> np.ndarray:
    """Mass placed as early as possible under ``pi_0 <= first_cap``,
    ``pi_{i+1} <= growth * pi_i`` and optionally ``pi_i <= uniform_cap``."""
    if first_cap <= 0:
        raise DomainError("first cap must be positive")
    caps = []
    total = 0.0
    cap = first_cap
    while total + cap < 1.0:
        caps.append(cap)
        total += cap
        cap = cap * growth
        if uniform_cap is not None:
            cap = min(cap, uniform_cap)
        if len(caps) > max_states:
            raise DomainError("greedy fill did not terminate")
    caps.append(1.0 - total)
    return np.asarray(caps)


def lower_bound_oracle(regime: Regime | str, params: Mapping[str, float], eps: float) -> LowerBoundResult:
    """Greedy lower bound on ``E[q]`` for any policy with regret at most ``eps``.

    ``params`` by regime:

    * ``concave_like``: ``second_derivative`` (``F''(1) < 0``)
    * ``non_concave_like``: ``lambda_max`` and either ``idle_coefficient`` or
      ``x1, x2, f_x1, f_x2`` of the two-point optimum
    * ``small_market``: ``slope`` (a tangent slope ``k > 0``)
    """
    regime = Regime(regime)
    _check_eps(eps)
    p = dict(params)
    try:
        if regime is Regime.CONCAVE_LIKE:
            f2 = float(p["second_derivative"])
            if not f2 < 0:
                raise DomainError("concave-like bound needs F''(1) < 0")
            cap = math.sqrt(2 * eps / -f2)
            witness = greedy_fill(min(cap, 1.0), 1.0, cap)
            closed = math.sqrt(-f2 / (8 * eps))
            caps = (("uniform", cap),)
        elif regime is Regime.NON_CONCAVE_LIKE:
            lmax = float(p["lambda_max"])
            if lmax <= 1:
                raise DomainError("non-concave-like bound needs lambda_max > 1")
            if "idle_coefficient" in p:
                coef = float(p["idle_coefficient"])
            else:
                coef = (p["x1"] - p["x2"]) / (p["f_x1"] - p["f_x2"])
            if not coef > 0:
                raise DomainError("idle coefficient must be positive")
            witness = greedy_fill(min(coef * eps, 1.0), lmax)
            closed = math.log(1 / eps) / math.log(lmax)
            caps = (("idle", coef * eps), ("growth", lmax))
        else:
            k = float(p["slope"])
            if not k > 0:
                raise DomainError("small-market bound needs a positive slope")
            if "first_derivative" in p and k > p["first_derivative"] + 1e-12:
                raise DomainError(f"slope {k} exceeds F'(1) = {p['first_derivative']}")
            witness = greedy_fill(min(eps / k, 1.0), 1.0)
            closed = k / (2 * eps)
            caps = (("idle", eps / k), ("growth", 1.0))
    except KeyError as exc:
        raise DomainError(f"regime {regime.value} needs parameter {exc.args[0]!r}") from None
    q = math.fsum(np.arange(witness.size) * witness)
    return LowerBoundResult(regime, q, closed, witness, caps)


def lower_bound_for(f: RewardFunction, sol: FluidSolution, eps: float) -> LowerBoundResult:
    """Pick the regime from the fluid solution and run :func:`lower_bound_oracle`."""
    if sol.is_two_point:
        x1, x2, _ = sol.support()
        return lower_bound_oracle(Regime.NON_CONCAVE_LIKE, {
            "lambda_max": f.lambda_max, "x1": x1, "x2": x2,
            "f_x1": float(f(x1)), "f_x2": float(f(x2))}, eps)
    if f.lambda_max <= 1:
        return lower_bound_oracle(Regime.SMALL_MARKET, {"slope": derivative(f, 1.0, 1, side="left")}, eps)
    return lower_bound_oracle(Regime.CONCAVE_LIKE, {"second_derivative": derivative(f, 1.0, 2)}, eps)


def two_arrival_floor(p: Policy) -> float:
    """``(tau + 1/k2) / 4``: a floor on ``E[q]`` for any two-arrival policy."""
    if p.family != "two_arrival":
        raise DomainError(f"floor applies to two-arrival policies, not {p.family}")
    d = p.param_dict
    return 0.25 * (d["tau"] + 1.0 / d["k2"])
