"""Short nonlinear run with the full diagnostics stack.

A small-amplitude band-limited perturbation is evolved with the pseudo-spectral
solver.  Along the run: the four invariant integrals hold to round-off, the
composite energy functional is monotone with dissipation-controlled slope, the
reconstructed distribution stays positive, and the moment-equation residuals
sit at the time-discretization level.

About two minutes at these settings (T = 1).
"""

import numpy as np

from kineticfluid import solver as sl

n, N, eps, dt, T = 8, 4, 1e-3, 1e-3, 1.0

state = sl.random_field_state(n, N, eps, seed=4)
state = sl.enforce_conservation_integrals(state)
print("initial invariant integrals:", sl.conservation_integrals(state))
print("advertised stability bound on dt:", f"{sl.stability_dt(state):.3f}")

result = sl.run(state, dt, int(T / dt), diag_stride=50)

t = result.series("t")
E = result.series("E")
D = result.series("D")
print("\n   t        E(t)          D(t)      min_F      res_mass")
for rec in result.records:
    print(f"{rec.time:5.2f}  {rec.E:.6e}  {rec.D:.4e}  {rec.min_F:+.1e}  "
          f"{rec.moment_residuals[0] if np.isfinite(rec.moment_residuals[0]) else float('nan'):.2e}")

cons = np.stack([result.series(k) for k in
                 ("cons_a", "cons_rho", "cons_momentum", "cons_energy")], axis=1)
print("\nmax invariant drift:", np.max(np.abs(cons - cons[0])))
print("energy monotone:", bool(np.all(np.diff(E) <= 0)))
print("max dE/(dt D):", float(np.max(np.diff(E) / (np.diff(t) * D[:-1]))), "(negative = dissipation)")

mex, fex, (rm, rf) = sl.exchange_terms(result.final_state)
print("exchange-term identity residuals:", rm, rf)
