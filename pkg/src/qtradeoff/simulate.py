"""Event-driven simulation of the controlled queue.

Each replication starts empty and runs the birth-death chain for
``horizon`` time units.  Time-weighted integrals of ``q`` and
``F(lambda(q))`` after the warm-up window give the per-replication
estimates; replications use independent streams spawned from one seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .chain import EventuallyConstant, General, Policy, stationary_distribution
from .errors import DomainError
from .reward import RewardFunction, evaluate


@dataclass(frozen=True)
class SimulationEstimate:
    mean_queue: float
    mean_reward: float
    se_queue: float
    se_reward: float
    replications: int
    horizon: float
    warmup_fraction: float
    seed: int


@numba.njit(cache=True)
def _replicate(rates, rewards, tail_rate, tail_reward, horizon, warmup, seed):
    np.random.seed(seed)
    n = rates.size
    t = 0.0
    q = 0
    acc_q = 0.0
    acc_r = 0.0
    while t < horizon:
        if q < n:
            lam = rates[q]
            rew = rewards[q]
        else:
            lam = tail_rate
            rew = tail_reward
        total = lam + (1.0 if q > 0 else 0.0)
        if total > 0.0:
            hold = -math.log(1.0 - np.random.random()) / total
        else:
            hold = horizon - t
        t_next = min(t + hold, horizon)
        start = max(t, warmup)
        if t_next > start:
            acc_q += q * (t_next - start)
            acc_r += rew * (t_next - start)
        t = t + hold
        if t >= horizon:
            break
        if np.random.random() * total < lam:
            q += 1
        else:
            q -= 1
    span = horizon - warmup
    return acc_q / span, acc_r / span


def _materialise(p: Policy, f: RewardFunction):
    """Rate and reward tables plus the constant tail beyond them."""
    tail = p.tail
    if isinstance(tail, General):
        d = stationary_distribution(p)
        n = max(4 * (d.truncation_level + 1), len(p.table))
        rates = p.rates_upto(n)
        tail_rate = float(rates[-1])
    else:
        rates = np.asarray(p.table, dtype=float)
        tail_rate = tail.rate if isinstance(tail, EventuallyConstant) else 0.0
    rewards = np.asarray(evaluate(f, rates), dtype=float).reshape(-1)
    return rates, rewards, tail_rate, float(evaluate(f, tail_rate))


def replication_seeds(seed: int, replications: int) -> list[int]:
    """Per-replication 32-bit seeds spawned from ``seed`` by index."""
    children = np.random.SeedSequence(seed).spawn(replications)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def simulate(p: Policy, f: RewardFunction, horizon: float = 1e5, warmup_fraction: float = 0.2,
             replications: int = 20, seed: int = 0) -> SimulationEstimate:
    """Estimate ``E[q]`` and the long-run reward of ``p`` by simulation.

    Identical inputs and ``seed`` give bit-identical estimates.  Standard
    errors are ``std(ddof=1) / sqrt(replications)`` and NaN for a single
    replication.
    """
    if not horizon > 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    if not 0 <= warmup_fraction < 1:
        raise DomainError(f"warmup_fraction must lie in [0, 1), got {warmup_fraction}")
    if replications < 1:
        raise DomainError("need at least one replication")
    if seed < 0 or seed >= 2**64:
        raise DomainError("seed must be a 64-bit unsigned integer")
    stationary_distribution(p)  # refuses unstable policies

    if p.rate(0) == 0:
        warnings.warn("lambda(0) = 0: the queue is absorbed at 0", stacklevel=2)
        r0 = float(evaluate(f, 0.0))
        se = 0.0 if replications > 1 else math.nan
        return SimulationEstimate(0.0, r0, se, se, replications, float(horizon),
                                  float(warmup_fraction), int(seed))

    rates, rewards, tail_rate, tail_reward = _materialise(p, f)
    warmup = warmup_fraction * horizon
    qs = np.empty(replications)
    rs = np.empty(replications)
    for i, s in enumerate(replication_seeds(seed, replications)):
        qs[i], rs[i] = _replicate(rates, rewards, tail_rate, tail_reward, float(horizon), warmup, s)
    if replications > 1:
        se_q = float(np.std(qs, ddof=1) / math.sqrt(replications))
        se_r = float(np.std(rs, ddof=1) / math.sqrt(replications))
    else:
        se_q = se_r = math.nan
    return SimulationEstimate(float(qs.mean()), float(rs.mean()), se_q, se_r, replications,
                              float(horizon), float(warmup_fraction), int(seed))
