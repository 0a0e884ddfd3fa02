"""
Queue length needed for a regret target
=======================================

Each family is tuned for a target regret eps.  For a concave reward the
fully dynamic policy needs roughly 1/sqrt(eps) customers in queue, a
two-rate threshold a little more, and a static rate 1/eps.
"""

from qtradeoff import (
    RewardFunction,
    evaluate_policy,
    fluid_benchmark,
    fully_dynamic_policy,
    lower_bound_for,
    static_near_capacity_policy,
    two_arrival_policy,
)

f = RewardFunction.quadratic(-1.0, 5.0, 0.0, 4.0)
sol = fluid_benchmark(f)

print("   eps    lower  dynamic  two-rate    static")
for eps in (0.01, 0.004, 0.001):
    row = [lower_bound_for(f, sol, eps).q_lower]
    for p in (fully_dynamic_policy(f, eps), two_arrival_policy(f, eps),
              static_near_capacity_policy(f, sol.f_star, eps)):
        row.append(evaluate_policy(p, f, sol.f_star).expected_queue)
    print(f"{eps:6.3f}  " + "  ".join(f"{v:7.1f}" for v in row))

# realised regret relative to the target
print("\nregret / eps:")
for eps in (0.01, 0.004, 0.001):
    dyn = evaluate_policy(fully_dynamic_policy(f, eps), f, sol.f_star).regret / eps
    two = evaluate_policy(two_arrival_policy(f, eps), f, sol.f_star).regret / eps
    print(f"  eps = {eps}: dynamic {dyn:.3f}, two-rate {two:.3f}")
