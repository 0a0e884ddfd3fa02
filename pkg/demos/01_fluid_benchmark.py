"""
Fluid benchmark and the concave-like verdict
============================================

The best long-run reward any stable policy can hope for is the value of a
small moment problem: spread the arrival rate over [0, lambda_max] with
mean at most one.  Concave-like rewards put all the mass at 1; others
split it between two rates.
"""

import numpy as np

from qtradeoff import RewardFunction, fluid_benchmark, polyhedral_check, quadratic_majorant

# a strictly concave reward: optimum sits at rate 1
quad = RewardFunction.quadratic(-1.0, 5.0, 0.0, 4.0)
sol = fluid_benchmark(quad)
print(f"5x - x^2    F* = {sol.f_star:.6f}  structure = {sol.structure.value}")

# the quadratic majorant sits between F and its tangent at 1
g = quadratic_majorant(quad)
xs = np.linspace(0.0, 4.0, 9)
print("  x      F(x)    majorant")
for x, a, b in zip(xs, quad(xs), g(xs)):
    print(f"  {x:4.1f}  {a:7.3f}  {b:8.3f}")

# a linear reward is not concave-like: the optimum mixes 0 and lambda_max
lin = RewardFunction.linear(1.0, 2.0)
sol = fluid_benchmark(lin)
x1, x2, p = sol.support()
print(f"\nF(x) = x     F* = {sol.f_star:.6f}  support = ({x1:g}, {x2:g}) with weight {p:.3f}")

# a piecewise reward with a kink: the dual certificate gives U* and the cone slope L
pw = RewardFunction.tabulated([0.0, 1.0, 1.5, 2.0], [0.0, 1.0, 2.0, 2.0])
sol = fluid_benchmark(pw)
cert = polyhedral_check(pw, sol)
print(f"piecewise    F* = {sol.f_star:.6f}  U* = {cert.u_star:.6f}  L = {cert.l_margin:.6f}")
