"""Linear stability probe around the discrete Milne fixed point."""
import time
import numpy as np

from vrmass.geometry import build_chart, hyperbolic_metric
from vrmass.constraints import MomentumField
from vrmass.reduced import ReducedPoint, restore_scalar_curvature
from vrmass.evolution import init_perturbed, step, _System

ch = build_chart(400, 12.0)
gb = hyperbolic_metric(ch)
x = ch.nodes
A = 1e-10
b0 = gb.b * (1 + A * np.exp(-((x - 3.0) ** 2)))
g0 = gb.with_coefficients(gb.a.copy(), b0)
gam, cf = restore_scalar_curvature(g0)
z = np.zeros_like(x)
pt = ReducedPoint(gam, MomentumField(ch, z, z), validate=False)
s = init_perturbed(pt)
sys = _System(ch, gb.fiber, scheme="constrained")

a0, bb0 = sys.a0, sys.b0
dt = 2e-4
w0 = time.time()
for i in range(5001):
    if i % 500 == 0:
        da = np.max(np.abs(s.g.a - a0))
        db = np.max(np.abs(s.g.b - bb0))
        dk = max(np.max(np.abs(s.K0.lam_rr)), np.max(np.abs(s.K0.lam_ff)))
        du = np.max(np.abs(s.N.values - 1))
        print(f"t={s.t:.3f}  |da|={da:.3e} |db|={db:.3e} |K0|={dk:.3e} "
              f"|u|={du:.3e}  [{time.time()-w0:.0f}s]")
    s = step(s, dt, sys)
