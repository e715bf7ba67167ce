"""Pressure is twice as regular as velocity, up to Lipschitz.

A lacunary series with amplitudes 2^(-alpha n) is C^alpha and no better.
The pressure increments it generates are fitted against the separation
|x - y| to read off an exponent: about 2 alpha below 1/2 and about 1 above.
"""
from locpress.bounds import holder_scan

for alpha in (0.2, 0.3, 0.4, 0.7, 0.8):
    fit = holder_scan(alpha, seed=0)
    print(f"alpha {alpha:.1f}: fitted {fit.fitted_exponent:.3f}  expected {fit.target:.1f}  "
          f"({fit.pairs_used} pairs over {fit.decades:.1f} decades)")

# At alpha = 1/2 the two regimes meet; compare a pure power with a log-corrected law.
fit = holder_scan(0.5, seed=0, strict=False)
print("alpha 0.5:", fit.log_fit)
