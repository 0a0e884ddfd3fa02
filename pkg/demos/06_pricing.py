"""
Revenue loss of a market of size n
==================================

With waiting cost h per customer and E[q] <= C / sqrt(eps), choosing
eps = (4hC/n)^(2/3) keeps the revenue loss of order n^(1/3).
"""

import math

from qtradeoff import RewardFunction
from qtradeoff.experiments import pricing_loss

f = RewardFunction.quadratic(-1.0, 5.0, 0.0, 4.0)
c = math.sqrt(14.0)  # fully dynamic: E[q] = B ~ sqrt(14 / eps)

print("       n      eps     bound   exact loss")
for n in (1e3, 8e3, 64e3, 512e3):
    r = pricing_loss(0.1, n, c, f)
    print(f"{n:8.0f}  {r.eps:.5f}  {r.loss_bound:8.2f}  {r.exact_loss:10.2f}")
