"""Closed-form families of initial data used by experiments and checks.

Every family is built directly from formulas, so expected behavior (decay
rates, constraint values, masses) is known independently of the solvers.
When the background carries analytic derivative arrays the family does too,
which keeps curvature evaluations at round-off accuracy.
"""

from __future__ import annotations

import numpy as np

from .constraints import (
    InitialDataSet,
    MomentumField,
    PerturbationPair,
    milne_momentum,
    _phi_raw,
)
from .geometry import RadialChart, WarpedMetric, scalar_curvature


def bump(r: np.ndarray, center: float, width: float) -> np.ndarray:
    """Compactly supported C^5 profile (1 - s^2)^6 on |r - center| < width."""
    s = (np.asarray(r, dtype=float) - center) / width
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = (1.0 - s[inside] ** 2) ** 6
    return out


def compact_perturbation(chart: RadialChart, amplitude: float,
                         center: float = 4.0) -> PerturbationPair:
    """Smooth compactly supported (h, q) with all four components active."""
    r = chart.nodes
    return PerturbationPair(
        chart,
        h_rr=amplitude * bump(r, center, 1.6),
        h_ff=amplitude * 0.7 * bump(r, center + 0.3, 1.8),
        q_rr=amplitude * 0.5 * bump(r, center + 0.1, 1.5),
        q_ff=amplitude * 0.3 * bump(r, center - 0.1, 1.7),
    )


def conformal_profile(chart: RadialChart, eps: float, rate: float = 2.0):
    """phi = 1 + eps e^{-rate r} with its first two radial derivatives."""
    r = chart.nodes
    u = eps * np.exp(-rate * r)
    return 1.0 + u, -rate * u, rate**2 * u


def conformal_data(background: WarpedMetric, eps: float,
                   rate: float = 2.0) -> InitialDataSet:
    """Conformally deformed data (phi^{4/(n-2)} g0, umbilic momentum).

    The momentum is the umbilic CMC value measured in g itself, so the
    trace anomaly tr_g pibar + n(n-1) vanishes identically and only the
    metric deformation carries mass.
    """
    n = background.n
    phi, dphi, d2phi = conformal_profile(background.chart, eps, rate)
    p = 2.0 / (n - 2.0)
    f = phi**p
    a = f * background.a
    b = f * background.b
    da = db = d2a = d2b = None
    if background.analytic:
        df = p * phi ** (p - 1.0) * dphi
        d2f = p * (p - 1.0) * phi ** (p - 2.0) * dphi**2 + p * phi ** (p - 1.0) * d2phi
        da = df * background.a + f * background.da
        db = df * background.b + f * background.db
        d2a = d2f * background.a + 2.0 * df * background.da + f * background.d2a
        d2b = d2f * background.b + 2.0 * df * background.db + f * background.d2b
    g = WarpedMetric(background.chart, background.fiber, a, b,
                     da=da, db=db, d2a=d2a, d2b=d2b)
    c = -(n - 1.0)
    ones = np.ones_like(background.chart.nodes)
    return InitialDataSet(g=g, pi=MomentumField(background.chart, c * ones, c * ones),
                          background=background,
                          background_pi=milne_momentum(background))


def slow_decay_data(background: WarpedMetric, amplitude: float,
                    delta: float) -> InitialDataSet:
    """Warp deformation b^2 = b0^2 (1 + A e^{-delta r}) with the umbilic
    momentum that solves the Hamiltonian constraint exactly:

        lam = -sqrt( -scal_g (n-1)/n )   =>   Phi_0 = 0 identically,

    where scal_g is evaluated by the same route constraint_map will take
    (analytic when the metric is analytic, stencil otherwise), so the
    discrete constraint vanishes to round-off.  The deviation from the
    background decays exactly at rate delta, which makes the family the
    natural probe of the decay hypothesis delta > (n-1)/2.
    """
    n = background.n
    chart = background.chart
    r = chart.nodes
    u = amplitude * np.exp(-delta * r)
    s = np.sqrt(1.0 + u)
    a = background.a.copy()
    b = background.b * s
    da = db = d2a = d2b = None
    if background.analytic:
        du = -delta * u
        d2u = delta**2 * u
        ds = du / (2.0 * s)
        d2s = d2u / (2.0 * s) - du**2 / (4.0 * s**3)
        da = background.da.copy()
        d2a = background.d2a.copy()
        db = background.db * s + background.b * ds
        d2b = background.d2b * s + 2.0 * background.db * ds + background.b * d2s
    g = WarpedMetric(chart, background.fiber, a, b, da=da, db=db, d2a=d2a, d2b=d2b)
    if g.analytic:
        scal = scalar_curvature(g).values
    else:
        zeros = np.zeros_like(r)
        scal = _phi_raw(chart, g.fiber, g.a, g.b, zeros, zeros)[0]
    val = -scal * (n - 1.0) / n
    if np.any(val <= 0.0):
        raise ValueError("amplitude too large: scalar curvature changes sign")
    lam = -np.sqrt(val)
    return InitialDataSet(g=g, pi=MomentumField(chart, lam.copy(), lam.copy()),
                          background=background,
                          background_pi=milne_momentum(background))
