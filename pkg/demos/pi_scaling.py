"""How fast does the increment part of the pressure vanish on smooth fields?

For a smooth field pi(., r) is O(r^2 |grad u|^2), so its L^3 norm over the
box should fall with slope 2 on a log-log plot.  The norm is evaluated on
the whole grid through the closed-form Fourier multiplier of the pi kernel.
"""
import numpy as np

from locpress.bounds import pi_scaling
from locpress.fields import make_field
from locpress.spectral import sample

radii = np.geomspace(0.02, 0.2, 6)
for kind, params in (("taylor_green", {}), ("beltrami_abc", {}),
                     ("random_solenoidal", {"seed": 1})):
    u = sample(make_field(kind, params), 32)
    slope, norms = pi_scaling(u, radii, q=3)
    print(f"{kind:18s} slope {slope:.4f}   |pi|_L3 from {norms[0]:.3e} to {norms[-1]:.3e}")
