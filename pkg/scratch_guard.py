"""Test: parity extrapolation guard at the regular center vs instability."""
import numpy as np

from vrmass.geometry import build_chart, hyperbolic_metric
from vrmass.constraints import MomentumField
from vrmass.reduced import ReducedPoint, restore_scalar_curvature
from vrmass.evolution import init_perturbed, step, _System, EvolutionState


def guard(s, sys):
    """Overwrite nodes 0..1 of every deviation field with parity-respecting
    extrapolation from nodes 2..4 (even in r; odd for b-deviation)."""
    x = s.g.chart.nodes
    da = s.g.a - sys.a0
    db = s.g.b - sys.b0
    kr = s.K0.lam_rr.copy()
    kf = s.K0.lam_ff.copy()
    i = [2, 3, 4]
    X = np.vander(x[i] ** 2, 3)  # even polynomial in r
    for arr in (da, kr, kf):
        c = np.linalg.solve(X, arr[i])
        arr[0] = np.polyval(c, 0.0)
        arr[1] = np.polyval(c, x[1] ** 2)
    codd = np.linalg.solve(X, db[i] / x[i])
    db[0] = 0.0
    db[1] = x[1] * np.polyval(codd, x[1] ** 2)
    g = s.g.with_coefficients(sys.a0 + da, sys.b0 + db)
    return EvolutionState(t=s.t, g=g, K0=MomentumField(s.g.chart, kr, kf), N=s.N)


ch = build_chart(400, 12.0)
gb = hyperbolic_metric(ch)
x = ch.nodes
A = 1e-10
b0 = gb.b * (1 + A * np.exp(-((x - 3.0) ** 2)))
gam, cf = restore_scalar_curvature(gb.with_coefficients(gb.a.copy(), b0))
z = np.zeros_like(x)
pt = ReducedPoint(gam, MomentumField(ch, z, z), validate=False)
s = init_perturbed(pt)
sys = _System(ch, gb.fiber)

dt = 1e-4
for i in range(8001):
    if i % 1000 == 0:
        da = np.max(np.abs(s.g.a - sys.a0))
        dk = max(np.max(np.abs(s.K0.lam_rr)), np.max(np.abs(s.K0.lam_ff)))
        du = np.max(np.abs(s.N.values - 1))
        print(f"t={s.t:.3f}  |da|={da:.3e} |K0|={dk:.3e} |u|={du:.3e}")
    s = step(s, dt, sys)
    s = guard(s, sys)
