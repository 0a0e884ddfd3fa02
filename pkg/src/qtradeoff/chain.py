"""Arrival-rate policies and the exact analysis of the birth-death chain they induce.

With service rate one, state ``q`` moves up at rate ``lambda(q)`` and down
at rate one when ``q > 0``.  Detailed balance gives
``pi[q + 1] = lambda(q) * pi[q]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    ConsistencyError,
    DomainError,
    InstabilityError,
    NoCertificateError,
)
from .reward import RewardFunction, evaluate

RATE_SLACK = 1e-12
PROBE_WINDOW = 64
MAX_STATES = 2_000_000


@dataclass(frozen=True)
class FiniteCutoff:
    """``lambda(q) = 0`` for every ``q >= q0``."""

    q0: int


@dataclass(frozen=True)
class EventuallyConstant:
    """``lambda(q) = rate`` for every ``q >= start``; stable only when ``rate < 1``."""

    rate: float
    start: int


@dataclass(frozen=True)
class General:
    """Rates beyond the table come from ``fn(q)``."""

    fn: Callable[[int], float]


Tail = Union[FiniteCutoff, EventuallyConstant, General]


@dataclass(frozen=True)
class Policy:
    """State-dependent arrival-rate map ``q -> lambda(q)``.

    ``table[q]`` gives the rate for ``q < len(table)``; ``tail`` describes
    every state beyond the table.  ``family`` and ``params`` record how the
    policy was built.
    """

    table: tuple
    tail: Tail
    lambda_max: float
    family: str = "custom"
    params: tuple = ()
    certified: bool = field(default=True, compare=False)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.size and (np.any(~np.isfinite(t)) or t.min() < 0 or t.max() > self.lambda_max + RATE_SLACK):
            raise DomainError(f"rates must lie in [0, {self.lambda_max}]")
        tail = self.tail
        if isinstance(tail, FiniteCutoff):
            if tail.q0 != t.size:
                raise DomainError(f"FiniteCutoff({tail.q0}) needs exactly {tail.q0} table rates, got {t.size}")
            if t.size and t.min() <= 0:
                raise DomainError("FiniteCutoff tables must be strictly positive below the cutoff")
        elif isinstance(tail, EventuallyConstant):
            if tail.start != t.size:
                raise DomainError(f"EventuallyConstant tail starting at {tail.start} "
                                  f"needs {tail.start} table rates, got {t.size}")
            if not 0 <= tail.rate <= self.lambda_max + RATE_SLACK:
                raise DomainError(f"tail rate {tail.rate} outside [0, {self.lambda_max}]")
            if tail.rate >= 1:
                raise InstabilityError(f"tail rate {tail.rate} >= 1: the queue is not stable")
        elif not isinstance(tail, General):
            raise DomainError(f"unknown tail descriptor {tail!r}")

    @property
    def param_dict(self) -> dict:
        return dict(self.params)

    def rate(self, q: int) -> float:
        if q < 0:
            raise DomainError("queue length must be nonnegative")
        if q < len(self.table):
            return float(self.table[q])
        tail = self.tail
        if isinstance(tail, FiniteCutoff):
            return 0.0
        if isinstance(tail, EventuallyConstant):
            return float(tail.rate)
        value = float(tail.fn(q))
        if not (0 <= value <= self.lambda_max + RATE_SLACK):
            raise DomainError(f"general tail returned rate {value} at q={q}")
        return value

    def rates_upto(self, n: int) -> np.ndarray:
        """Rates ``lambda(0), ..., lambda(n - 1)``."""
        out = np.zeros(n)
        m = min(n, len(self.table))
        out[:m] = self.table[:m]
        if n > m:
            if isinstance(self.tail, EventuallyConstant):
                out[m:] = self.tail.rate
            elif isinstance(self.tail, General):
                out[m:] = [self.rate(q) for q in range(m, n)]
        return out


def build_static_policy(c: float, lambda_max: float = 1.0) -> Policy:
    """Constant arrival rate ``c`` in ``[0, 1)``."""
    if c >= 1:
        raise InstabilityError(f"static rate c={c} >= 1 is not stable")
    if c < 0 or c > lambda_max:
        raise DomainError(f"static rate c={c} outside [0, {lambda_max}]")
    return Policy((), EventuallyConstant(float(c), 0), float(max(lambda_max, c)), "static", (("c", float(c)),))


def _probe_general(table: Sequence[float], fn: Callable, start: int, n: int = 4 * PROBE_WINDOW) -> bool:
    rates = [float(fn(q)) for q in range(start, start + n)]
    return max(rates[-PROBE_WINDOW:]) < 1


def build_custom_policy(table: Sequence[float], tail: Tail, lambda_max: float,
                        family: str = "custom", params: tuple = ()) -> Policy:
    """Policy from an explicit rate table plus tail descriptor.

    A ``General`` tail that never drops below rate one over the probe window
    is accepted with ``certified=False`` and a warning;
    :func:`stationary_distribution` will refuse it.
    """
    certified = True
    if isinstance(tail, General):
        certified = _probe_general(table, tail.fn, len(table))
        if not certified:
            warnings.warn("general tail shows no rate below 1 over the probe window; "
                          "stability is not certified", stacklevel=2)
    return Policy(tuple(float(r) for r in table), tail, float(lambda_max), family, params, certified)


@dataclass(frozen=True)
class GeometricTail:
    """Mass beyond the represented states: ``pi[start + j] = pi[start] * ratio**j``."""

    ratio: float
    start: int


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary probabilities ``pi[0..Q]`` plus a description of the rest.

    For geometric tails ``tail_mass`` is the exact mass beyond ``Q`` and
    ``tail_mass_bound`` equals it.  For general tails ``tail_mass`` is zero
    (the represented part is renormalised) and ``tail_mass_bound`` is the
    certified bound on what was truncated.
    """

    probabilities: np.ndarray
    policy: Policy
    tail: GeometricTail | None = None
    tail_mass: float = 0.0
    tail_mass_bound: float = 0.0

    @property
    def truncation_level(self) -> int:
        return self.probabilities.size - 1

    @property
    def idle(self) -> float:
        return float(self.probabilities[0])

    def total_mass(self) -> float:
        return math.fsum(self.probabilities) + self.tail_mass

    def pmf(self, n: int) -> np.ndarray:
        """``pi[0..n-1]``, extending into the geometric tail when needed."""
        Q = self.truncation_level
        if n <= Q + 1:
            return self.probabilities[:n].copy()
        out = np.zeros(n)
        out[:Q + 1] = self.probabilities
        if self.tail is not None:
            j = np.arange(1, n - Q)
            out[Q + 1:] = self.probabilities[Q] * self.tail.ratio ** j
        return out


def _normalise(log_w: np.ndarray) -> tuple[np.ndarray, float]:
    """Weights scaled so the largest is one, plus the log of that scale."""
    top = float(np.max(log_w))
    with np.errstate(under="ignore"):
        return np.exp(log_w - top), top


def _log_weights(rates: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.concatenate(([0.0], np.cumsum(np.log(rates))))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def stationary_distribution(p: Policy, tol: float = 1e-12) -> StationaryDistribution:
    """Exact stationary distribution of the chain induced by ``p``.

    Finite cutoffs are normalised exactly and constant tails in closed form.
    General tails are extended until a run of ``PROBE_WINDOW`` rates bounded
    by some ``lambda_sup < 1`` makes the geometric bound on the remaining
    mass smaller than ``tol``.
    """
    tail = p.tail
    if isinstance(tail, FiniteCutoff):
        w, _ = _normalise(_log_weights(np.asarray(p.table, dtype=float)))
        return StationaryDistribution(_freeze(w / math.fsum(w)), p)

    if isinstance(tail, EventuallyConstant):
        w, _ = _normalise(_log_weights(np.asarray(p.table, dtype=float)))
        rho = tail.rate
        geo = w[-1] * rho / (1.0 - rho)
        z = math.fsum(w) + geo
        probs = w / z
        return StationaryDistribution(_freeze(probs), p, GeometricTail(rho, tail.start),
                                      geo / z, geo / z)

    if not p.certified:
        raise NoCertificateError("general tail has no stability certificate")
    n = max(len(p.table) + 4 * PROBE_WINDOW, 256)
    while True:
        rates = p.rates_upto(n)
        log_w = _log_weights(rates)
        if log_w[-1] > 700:
            raise InstabilityError(f"weights diverge: log w_{n} = {log_w[-1]:.1f}")
        window = rates[n - PROBE_WINDOW:]
        lam_sup = float(window.max())
        if lam_sup >= 1 and np.all(window >= 1):
            raise NoCertificateError("rates stay at or above 1 beyond the truncation probe")
        if lam_sup < 1:
            w, top = _normalise(log_w)
            z = math.fsum(w)
            bound = w[-1] * lam_sup / (1.0 - lam_sup) / z
            if bound < tol:
                return StationaryDistribution(_freeze(w / z), p, None, 0.0, bound)
        if n >= MAX_STATES:
            raise NoCertificateError(f"no tail certificate within {MAX_STATES} states")
        n *= 2


@dataclass(frozen=True)
class PolicyMetrics:
    expected_queue: float
    reward: float
    regret: float
    throughput: float
    idle: float
    truncation_level: int


def metrics(p: Policy, d: StationaryDistribution, f: RewardFunction, f_star: float) -> PolicyMetrics:
    """Long-run queue length, reward, regret and throughput of ``p``."""
    if d.policy is not p and d.policy != p:
        raise ConsistencyError("stationary distribution was computed for a different policy")
    pi = d.probabilities
    Q = pi.size - 1
    idx = np.arange(Q + 1, dtype=float)
    rates = p.rates_upto(Q + 1)
    rewards = np.asarray(evaluate(f, rates), dtype=float).reshape(-1)

    eq = math.fsum(idx * pi)
    reward = math.fsum(rewards * pi)
    throughput = math.fsum(rates * pi)
    if d.tail is not None and d.tail_mass > 0:
        rho, s = d.tail.ratio, d.tail.start
        mass = d.tail_mass
        eq += s * mass + pi[Q] * rho / (1.0 - rho) ** 2
        reward += float(evaluate(f, rho)) * mass
        throughput += rho * mass
    return PolicyMetrics(eq, reward, f_star - reward, throughput, float(pi[0]), Q)


def evaluate_policy(p: Policy, f: RewardFunction, f_star: float, tol: float = 1e-12) -> PolicyMetrics:
    """Shortcut for ``metrics(p, stationary_distribution(p), f, f_star)``."""
    return metrics(p, stationary_distribution(p, tol), f, f_star)
