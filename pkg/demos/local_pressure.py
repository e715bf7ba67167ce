"""Rebuild the Taylor-Green pressure at one point from data on a small ball.

beta(x, r) only sees the pressure on the shell r <= |y - x| <= 2r, and pi(x, r)
only sees velocity increments inside the ball of radius 2r.  Their sum should
not depend on r and should equal p(x).
"""
import numpy as np

from locpress.fields import exact_pressure, make_field
from locpress.localform import reconstruct
from locpress.sphere import build_sphere_rule

field = make_field("taylor_green")
src = exact_pressure(field)
rule = build_sphere_rule(16)
x = np.array([1.0, 0.4, 2.2])

print(f"p(x) = {src.value(x):+.12f}")
print(f"{'r':>6} {'beta':>16} {'pi':>16} {'beta + pi':>16} {'residual':>10}")
for r in (0.05, 0.1, 0.2, 0.4, 0.7):
    probe = reconstruct(field, src, x, r, rule)
    print(f"{r:6.2f} {probe.beta:+16.12f} {probe.pi:+16.12f} {probe.beta + probe.pi:+16.12f} "
          f"{probe.residual:10.1e}")

# As r shrinks, beta carries nearly all of p and pi fades like r^2.
