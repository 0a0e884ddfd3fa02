"""
Simulation against exact values
===============================

Gillespie simulation of the controlled queue, 20 independent replications
per policy, compared with the exact stationary means.
"""

from qtradeoff import (
    RewardFunction,
    build_static_policy,
    dynamic_policy,
    evaluate_policy,
    simulate,
    throughput_threshold_policy,
)

cases = [
    ("static 0.5", build_static_policy(0.5), RewardFunction.linear(1.0, 1.0)),
    ("dynamic m=1 B=5", dynamic_policy(1, 5), RewardFunction.quadratic(-1.0, 5.0, 0.0, 4.0)),
    ("threshold lambda=2", throughput_threshold_policy(2.0, 0.01), RewardFunction.linear(1.0, 2.0)),
]

for i, (name, p, f) in enumerate(cases):
    exact = evaluate_policy(p, f, 0.0)
    est = simulate(p, f, horizon=1e5, replications=20, seed=100 + i)
    z = (est.mean_queue - exact.expected_queue) / est.se_queue
    print(f"{name:20s} exact {exact.expected_queue:8.4f}  sim {est.mean_queue:8.4f} "
          f"+- {est.se_queue:.4f}  (z = {z:+.2f})")
