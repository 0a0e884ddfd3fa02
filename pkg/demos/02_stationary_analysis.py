"""
Exact analysis of a controlled birth-death chain
================================================

A policy maps queue length to an arrival rate; with unit service rate the
stationary distribution follows from detailed balance.  The fully dynamic
policy rises toward a centre B and falls back, and its mean queue length
is exactly B.
"""

import numpy as np

from qtradeoff import (
    RewardFunction,
    build_static_policy,
    dynamic_policy,
    evaluate_policy,
    fluid_benchmark,
    stationary_distribution,
)

f = RewardFunction.quadratic(-1.0, 5.0, 0.0, 4.0)
f_star = fluid_benchmark(f).f_star

p = dynamic_policy(0, 2)
d = stationary_distribution(p)
print("rates:", np.round(p.table, 4))
print("pi * 19:", np.round(d.probabilities * 19, 10))

for B in (5, 20, 100):
    m = evaluate_policy(dynamic_policy(0, B), f, f_star)
    print(f"B = {B:3d}: E[q] = {m.expected_queue:.12f}  regret = {m.regret:.3e}  idle = {m.idle:.3e}")

# the M/M/1 baseline: running at constant rate c costs E[q] = c / (1 - c)
for c in (0.9, 0.99):
    m = evaluate_policy(build_static_policy(c), f, f_star)
    print(f"static c = {c}: E[q] = {m.expected_queue:.3f}  regret = {m.regret:.4f}")
