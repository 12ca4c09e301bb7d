"""Probe: free-scheme evolution of TT excision seeds (the init_perturbed family)."""
import numpy as np

from vrmass.geometry import FiberSpec, build_chart, hyperbolic_metric
from vrmass.reduced import ReducedPoint, radial_tt_family
from vrmass.evolution import init_perturbed, evolve, monotonicity_report

ch = build_chart(400, 12.0, r_min=1.0)
fib = FiberSpec.unit_sphere(3)
gb = hyperbolic_metric(ch, fib)
gam = gb.with_coefficients(gb.a.copy(), gb.b.copy())

for C in (0.05, 0.2):
    p = radial_tt_family(gam, C)
    pt = ReducedPoint(gam, p, validate=True)
    s0 = init_perturbed(pt, t0=1.0)
    print(f"C={C}: m-ish seed ready; |K0|max={np.max(np.abs(s0.K0.lam_rr)):.3e} "
          f"N-1 in [{np.min(s0.N.values)-1:.2e},{np.max(s0.N.values)-1:.2e}]")
    try:
        traj = evolve(s0, 1.2, dt=5e-4, record_every=20,
                      check_hypotheses=False, scheme="free")
        aborted = ""
    except Exception as e:
        print("  evolve raised:", e)
        continue
    rep = monotonicity_report(traj)
    m = np.array(traj.masses)
    r = np.array(traj.rates)
    fd = traj.fd_rates()
    print(f"  states={len(traj.states)} m0={m[0]:.6e} m_end={m[-1]:.6e}")
    print(f"  max_inc={rep.max_increment:.3e} median_gap={rep.median_rate_gap*100:.3f}% "
          f"drift_end={traj.constraint_drift[-1]:.3e}")
    mid = len(m) // 2
    print(f"  sample t={traj.times()[mid]:.3f}: rate={r[mid]:.6e} fd={fd[mid]:.6e} "
          f"ratio={fd[mid]/r[mid]:.4f}")
    print(f"  rate[1]={r[1]:.6e} fd[1]={fd[1]:.6e} ratio={fd[1]/r[1]:.4f}")
