"""A short decaying Taylor-Green run with every monitor attached.

Prints the a priori time integrals next to their budgets, then the
localized regularity-criterion bookkeeping at r = 0.2.
"""
from locpress.nsmon import NSConfig, criteria_monitor, fgt_report, run

conf = NSConfig(N=16, nu=0.1, dt=2e-3, T=0.5, sample_every=25)
traj = run(conf)
print(f"{len(traj.samples)} samples, energy residual {traj.energy_residual():.1e} per unit time,"
      f" max divergence {traj.max_divergence:.1e}")

rep = fgt_report(traj, conf)
print(f"\nA = {rep['A']:.4g}, D = {rep['D']:.4g}")
for name, v in rep["integrals"].items():
    print(f"  {name:8s} {v['value']:11.4e}   budget {v['budget']:11.4e}   ratio {v['ratio']:.2e}")
print("  |grad p| <= |u.grad u| at every sample:", rep["gradp_le_unau"])

mon = criteria_monitor(traj, conf)
print(f"\nint r^-gamma dt = {mon['int_r_minus_gamma']:.4g}"
      f", int |pi|_L3^2 dt = {mon['int_pi_L3_sq']:.4e}, max |u|_L3 = {mon['y_max']:.4f}")
for c in mon["cond"][:3]:
    print(f"  t = {c['t']:.3f}: {c['lhs']:.3e} <= {c['rhs']:.3e}  {c['holds']}")
