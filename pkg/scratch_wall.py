"""Probe: inner-wall closures for TT excision evolution (flux through r0)."""
import numpy as np

from vrmass.geometry import FiberSpec, build_chart, hyperbolic_metric, d1
from vrmass.reduced import ReducedPoint, radial_tt_family
from vrmass.evolution import (_System, init_perturbed, evolve,
                              monotonicity_report)
import vrmass.evolution as ev


class FrozenWall(_System):
    """Free scheme, all four tendencies pinned at the inner edge."""

    def rhs(self, a, b, kr, kf, t):
        Fa, Fb, Fkr, Fkf, u = super().rhs(a, b, kr, kf, t)
        for F in (Fa, Fb, Fkr, Fkf):
            F[0] = 0.0
        return Fa, Fb, Fkr, Fkf, u


class FrozenKappa(_System):
    """Free scheme, kappa tendencies pinned at the inner edge."""

    def rhs(self, a, b, kr, kf, t):
        Fa, Fb, Fkr, Fkf, u = super().rhs(a, b, kr, kf, t)
        Fkr[0] = 0.0
        Fkf[0] = 0.0
        return Fa, Fb, Fkr, Fkf, u


class InwardConstrained(_System):
    """Constrained scheme with the momentum quadrature run inward from the
    outer edge, anchored by the CMC datum kappa_f(R) = -kappa_r(R)/(n-1)."""

    def kf_from_momentum(self, b, kr):
        if self.parity:
            return super().kf_from_momentum(b, kr)
        x = self.chart.nodes
        db = d1(b, x, parity=0)
        f = db * kr
        Iseg = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
        # cumulative integral from r to R
        tail = np.concatenate((np.cumsum(Iseg[::-1])[::-1], [0.0]))
        C = -b[-1] * kr[-1] / (self.n - 1.0)
        return (C - tail) / b


def run(tag, scheme, sysclass):
    ch = build_chart(400, 12.0, r_min=1.0)
    fib = FiberSpec.unit_sphere(3)
    gb = hyperbolic_metric(ch, fib)
    gam = gb.with_coefficients(gb.a.copy(), gb.b.copy())
    p = radial_tt_family(gam, 0.05)
    pt = ReducedPoint(gam, p, validate=True)
    s0 = init_perturbed(pt, t0=1.0)
    orig = ev._System
    ev._System = sysclass
    try:
        traj = evolve(s0, 1.2, dt=5e-4, record_every=20,
                      check_hypotheses=False, scheme=scheme)
    except Exception as e:
        print(f"{tag}: evolve raised: {e}")
        return
    finally:
        ev._System = orig
    rep = monotonicity_report(traj)
    m = np.array(traj.masses); r = np.array(traj.rates); fd = traj.fd_rates()
    tt = traj.times if isinstance(traj.times, np.ndarray) else traj.times()
    print(f"{tag}: m0={m[0]:.6e} m_end={m[-1]:.6e} max_inc={rep.max_positive_increment:+.3e} "
          f"gap={rep.median_rate_gap*100:.2f}% drift={traj.constraint_drift[-1]:.3e}")
    for i in (1, 10, 19):
        print(f"   t={tt[i]:.3f} rate={r[i]:+.5e} fd={fd[i]:+.5e} flux={fd[i]-r[i]:+.4e}")


run("frozen-wall ", "free", FrozenWall)
run("frozen-kappa", "free", FrozenKappa)
run("constrained-inward", "constrained", InwardConstrained)
