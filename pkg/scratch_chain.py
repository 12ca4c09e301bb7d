"""Probe: decompose fd-vs-rate gap into identity-chain links.

fd(m) = d/dt[adm + rv + tr columns];  rv-dot should equal the sweep
S1 + S3; the lapse identity makes S1 = S2 = the eq-dm rate integral.
"""
import numpy as np

from vrmass.geometry import FiberSpec, build_chart, hyperbolic_metric, integrate_ball
from vrmass.reduced import ReducedPoint, radial_tt_family
from vrmass.evolution import _System, init_perturbed, step, mass_rate
from vrmass.mass import vr_mass

ch = build_chart(400, 12.0, r_min=1.0)
fib = FiberSpec.unit_sphere(3)
gb = hyperbolic_metric(ch, fib)
gam = gb.with_coefficients(gb.a.copy(), gb.b.copy())
p = radial_tt_family(gam, 0.05)
pt = ReducedPoint(gam, p, validate=True)
s = init_perturbed(pt, t0=1.0)
sys = _System(ch, fib)
V_f = fib.total_volume


def cols(s):
    rep = vr_mass(s.data(gam), check_hypotheses=False)
    return (np.asarray(rep.adm_terms)[-1], np.asarray(rep.rv_terms)[-1],
            np.asarray(rep.trace_terms)[-1], rep.limit)


def sweeps(s):
    n, t = s.n, s.t
    u = s.N.values - 1.0
    kr = s.K0.lam_rr / t
    kf = s.K0.lam_ff / t
    trk = kr + (n - 1.0) * kf
    x = ch.nodes
    ab2 = s.g.a * s.g.b ** (n - 1)
    w = np.ones_like(x)  # trapezoid weights
    w[0] = w[-1] = 0.5
    dr = np.diff(x)[0]
    S1 = 2.0 * (n - 1.0) ** 2 / t * integrate_ball(u, s.g)
    S2 = mass_rate(s)
    S3 = -2.0 * (n - 1.0) * V_f * float(np.sum(w * ab2 * s.N.values * trk) * dr)
    return S1, S2, S3


dt = 5e-4
prev = cols(s)
t_prev = s.t
for k in range(200):
    s = step(s, dt, system=sys)
    if (k + 1) % 50 == 0:
        cur = cols(s)
        d = [(cur[i] - prev[i]) / (s.t - t_prev) for i in range(4)]
        S1, S2, S3 = sweeps(s)
        print(f"t={s.t:.3f} cmc={s.cmc_residual:.2e}")
        print(f"   adm_dot={d[0]:+.5e} rv_dot={d[1]:+.5e} tr_dot={d[2]:+.5e} "
              f"m_dot={d[3]:+.5e}")
        print(f"   S1(12u/t)={S1:+.5e} S2(rate)={S2:+.5e} S3(trk)={S3:+.5e} "
              f"S1+S3={S1+S3:+.5e}")
        prev = cur
        t_prev = s.t
