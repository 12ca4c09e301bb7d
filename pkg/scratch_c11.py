"""Full criterion-level run: three TT amplitudes, t in [1,2], plus M=200."""
import time

import numpy as np

from vrmass.geometry import FiberSpec, build_chart, hyperbolic_metric
from vrmass.reduced import ReducedPoint, radial_tt_family
from vrmass.evolution import init_perturbed, evolve, monotonicity_report


def run(M, C, t_end=2.0, dt=5e-4):
    ch = build_chart(M, 12.0, r_min=1.0)
    fib = FiberSpec.unit_sphere(3)
    gb = hyperbolic_metric(ch, fib)
    gam = gb.with_coefficients(gb.a.copy(), gb.b.copy())
    p = radial_tt_family(gam, C)
    pt = ReducedPoint(gam, p, validate=True)
    s0 = init_perturbed(pt, t0=1.0)
    t0 = time.time()
    traj = evolve(s0, t_end, dt=dt, record_every=50, check_hypotheses=True)
    el = time.time() - t0
    rep = monotonicity_report(traj)
    m = np.array(traj.masses)
    r = np.array(traj.rates)
    fd = traj.fd_rates()
    rel = np.abs(fd[1:-1] - r[1:-1]) / np.abs(r[1:-1])
    print(f"M={M} C={C}: aborted={traj.aborted!r} {el:.0f}s")
    print(f"   m0={m[0]:.6e} m_end={m[-1]:.6e} max_inc={rep.max_positive_increment:+.3e}")
    print(f"   median_gap={rep.median_rate_gap*100:.3f}% max_gap={np.max(rel)*100:.2f}% "
          f"drift_end={traj.constraint_drift[-1]:.3e} minN={min(np.min(s.N.values) for s in traj.states):.6f}")
    return rep, traj


for C in (0.05, 0.1, 0.2):
    run(400, C)
run(200, 0.05)
