"""Probe: which mass column leaks along the constrained-inward TT run."""
import numpy as np

from vrmass.geometry import FiberSpec, build_chart, hyperbolic_metric, d1
from vrmass.reduced import ReducedPoint, radial_tt_family
from vrmass.evolution import _System, init_perturbed, step
from vrmass.mass import vr_mass
import vrmass.evolution as ev


class InwardConstrained(_System):
    def kf_from_momentum(self, b, kr):
        if self.parity:
            return super().kf_from_momentum(b, kr)
        x = self.chart.nodes
        db = d1(b, x, parity=0)
        f = db * kr
        Iseg = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
        tail = np.concatenate((np.cumsum(Iseg[::-1])[::-1], [0.0]))
        C = -b[-1] * kr[-1] / (self.n - 1.0)
        return (C - tail) / b


ch = build_chart(400, 12.0, r_min=1.0)
fib = FiberSpec.unit_sphere(3)
gb = hyperbolic_metric(ch, fib)
gam = gb.with_coefficients(gb.a.copy(), gb.b.copy())
p = radial_tt_family(gam, 0.05)
pt = ReducedPoint(gam, p, validate=True)
s = init_perturbed(pt, t0=1.0)
bg = gam
sys = InwardConstrained(ch, fib, scheme="constrained")


def report(s, tag):
    rep = vr_mass(s.data(bg), check_hypotheses=False)
    x = ch.nodes
    da = s.g.a - gam.a
    db_ = s.g.b - gam.b
    print(f"{tag}: t={s.t:.3f} m={rep.limit:.5e} cmc={s.cmc_residual:.3e}")
    print(f"   adm={np.array2string(np.asarray(rep.adm_terms), precision=4)}")
    print(f"   rv ={np.array2string(np.asarray(rep.rv_terms), precision=4)}")
    print(f"   tr ={np.array2string(np.asarray(rep.trace_terms), precision=4)}")
    for rr in (1.0, 1.5, 3.0, 6.0, 10.0):
        j = int(np.argmin(np.abs(x - rr)))
        print(f"   r={rr:5.2f} da={da[j]:+.3e} db={db_[j]:+.3e} "
              f"K0r={s.K0.lam_rr[j]:+.3e} K0f={s.K0.lam_ff[j]:+.3e} u={s.N.values[j]-1:+.3e}")


report(s, "init")
dt = 5e-4
for k in range(400):
    s = step(s, dt, system=sys)
    if (k + 1) % 100 == 0:
        report(s, f"k={k+1}")
