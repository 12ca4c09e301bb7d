"""Vacuum constraint map and its Michel-type linearization identities.

Conventions (cosmological normalization, fiber dimension n-1):

    Phi_0(g, pi) = (scal_g + (tr_g pibar)^2/(n-1) - |pibar|_g^2) dV_g
    Phi_i(g, pi) = 2 g_{ik} div_g(pi)^k
    pibar = pi / dV_g,   background momentum  pibar0 = -(n-1) g0^{-1}

Momentum fields are stored de-densitized with orthonormal eigenvalues
(lam_rr, lam_ff) relative to their own metric; every pairing inserts the
appropriate volume factor at quadrature time.

The linearization at the Milne background (g0, pi0) and its formal adjoint
(lapse N, shift X = 0):

    DPhi_0(h, q) = [ div div h - Lap tr h - (n-1)(n-3) tr h ] dV0 - 2 tr q
    <DPhi*(N), (h,q)> = h_ij (grad^i grad^j N - g0^ij Lap N)
                        - (n-1)(n-3) N tr h - 2 N tr q
    U^i(N, h, q) = N (div h - d tr h)^i - h^{ij} grad_j N + tr h grad^i N

with the pointwise identity  <V, DPhi(h,q)> = div U + <DPhi*(V), (h,q)>.
The boundary potential above is the integration-by-parts companion of the
adjoint; the Michel residual test (order-2 convergence to zero) arbitrates
the sign conventions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    FiberSpec,
    RadialChart,
    RadialField,
    WarpedMetric,
    arc_d1,
    arc_d2,
    d1,
    d2,
    _fill_center,
    integrate_ball,
    metric_d1,
    scalar_curvature,
    warp_derivatives,
)


# ---------------------------------------------------------------------------
# data containers


@dataclass
class MomentumField:
    """De-densitized conjugate momentum of a warped slice.

    lam_rr and lam_ff are the orthonormal eigenvalues of pi/dV_g in the
    radial and fiber directions, measured against the metric named by
    densitized_against (documentation only; the object doesn't hold the
    metric).  The Milne value is lam_rr = lam_ff = -(n-1).
    """

    chart: RadialChart
    lam_rr: np.ndarray
    lam_ff: np.ndarray
    densitized_against: str = "g"

    def __post_init__(self):
        self.lam_rr = np.asarray(self.lam_rr, dtype=float)
        self.lam_ff = np.asarray(self.lam_ff, dtype=float)
        if self.lam_rr.shape != self.chart.nodes.shape or self.lam_ff.shape != self.chart.nodes.shape:
            raise ValueError("momentum component shape does not match chart")

    def trace(self, n: int) -> np.ndarray:
        return self.lam_rr + (n - 1) * self.lam_ff

    def norm2(self, n: int) -> np.ndarray:
        return self.lam_rr**2 + (n - 1) * self.lam_ff**2


def milne_momentum(g: WarpedMetric) -> MomentumField:
    """pi = -(n-1) g^{-1} dV_g, the Milne/umbilic CMC value."""
    c = -(g.n - 1.0)
    ones = np.ones_like(g.chart.nodes)
    return MomentumField(g.chart, c * ones, c * ones)


@dataclass
class LapseShift:
    """Lapse profile and (identically zero in this package) radial shift."""

    chart: RadialChart
    N: np.ndarray
    X: np.ndarray | None = None

    def __post_init__(self):
        self.N = np.asarray(self.N, dtype=float)
        if self.N.shape != self.chart.nodes.shape:
            raise ValueError("lapse shape does not match chart")
        if self.X is None:
            self.X = np.zeros_like(self.N)
        else:
            self.X = np.asarray(self.X, dtype=float)

    @property
    def has_shift(self) -> bool:
        return bool(np.any(self.X != 0.0))


@dataclass
class PerturbationPair:
    """Tangent direction (h, q) at the background.

    h_rr, h_ff: orthonormal components of the symmetric 2-tensor h w.r.t.
    the background metric.  q_rr, q_ff: orthonormal components of the
    momentum direction q de-densitized against the background volume.
    """

    chart: RadialChart
    h_rr: np.ndarray
    h_ff: np.ndarray
    q_rr: np.ndarray
    q_ff: np.ndarray

    def __post_init__(self):
        for name in ("h_rr", "h_ff", "q_rr", "q_ff"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != self.chart.nodes.shape:
                raise ValueError(f"{name} shape does not match chart")
            setattr(self, name, v)

    def tr_h(self, n: int) -> np.ndarray:
        return self.h_rr + (n - 1) * self.h_ff

    def tr_q(self, n: int) -> np.ndarray:
        return self.q_rr + (n - 1) * self.q_ff

    def sup(self) -> float:
        return float(max(np.max(np.abs(v)) for v in
                         (self.h_rr, self.h_ff, self.q_rr, self.q_ff)))


@dataclass
class InitialDataSet:
    """(g, pi) together with the reference background it is compared to."""

    g: WarpedMetric
    pi: MomentumField
    background: WarpedMetric
    background_pi: MomentumField | None = None

    def __post_init__(self):
        if self.background_pi is None:
            self.background_pi = milne_momentum(self.background)
        if self.g.chart is not self.background.chart and not np.array_equal(
                self.g.chart.nodes, self.background.chart.nodes):
            raise ValueError("data and background must share a chart")

    @property
    def n(self) -> int:
        return self.g.n

    def perturbation(self) -> PerturbationPair:
        """(h, q) = (g - g0, pi - pi0) in background-orthonormal components.

        At a regular center b(0) = 0 makes the component ratios 0/0; the
        center value is filled by quadratic extrapolation like every other
        de-densitized profile.
        """
        g, gb = self.g, self.background
        with np.errstate(divide="ignore", invalid="ignore"):
            h_rr = (g.a**2 - gb.a**2) / gb.a**2
            h_ff = (g.b**2 - gb.b**2) / gb.b**2
        h_rr = _fill_center(np.asarray(h_rr), g.chart)
        h_ff = _fill_center(np.asarray(h_ff), g.chart)
        lam_rr_b, lam_ff_b = _momentum_in_background_frame(self)
        q_rr = lam_rr_b - self.background_pi.lam_rr
        q_ff = lam_ff_b - self.background_pi.lam_ff
        return PerturbationPair(g.chart, h_rr, h_ff, q_rr, q_ff)


def _momentum_in_background_frame(d: InitialDataSet):
    """pi of d as a density over dV_g0 in g0-orthonormal upper components."""
    g, gb = d.g, d.background
    n = d.n
    with np.errstate(divide="ignore", invalid="ignore"):
        jac = (g.a * g.b ** (n - 1)) / (gb.a * gb.b ** (n - 1))
        lam_rr_b = d.pi.lam_rr * (gb.a**2 / g.a**2) * jac
        lam_ff_b = d.pi.lam_ff * (gb.b**2 / g.b**2) * jac
    lam_rr_b = _fill_center(np.asarray(lam_rr_b), d.g.chart)
    lam_ff_b = _fill_center(np.asarray(lam_ff_b), d.g.chart)
    return lam_rr_b, lam_ff_b


def data_from_perturbation(background: WarpedMetric, pert: PerturbationPair,
                           eps: float = 1.0,
                           background_pi: MomentumField | None = None) -> InitialDataSet:
    """Inverse of InitialDataSet.perturbation: (g0 + eps h, pi0 + eps q)."""
    gb = background
    n = gb.n
    if background_pi is None:
        background_pi = milne_momentum(gb)
    a = gb.a * np.sqrt(1.0 + eps * pert.h_rr)
    b = gb.b * np.sqrt(1.0 + eps * pert.h_ff)
    g = WarpedMetric(gb.chart, gb.fiber, a, b)
    jac = (gb.a * gb.b ** (n - 1)) / (a * b ** (n - 1))
    lam_rr = (background_pi.lam_rr + eps * pert.q_rr) * (a**2 / gb.a**2) * jac
    lam_ff = (background_pi.lam_ff + eps * pert.q_ff) * (b**2 / gb.b**2) * jac
    pi = MomentumField(gb.chart, lam_rr, lam_ff)
    return InitialDataSet(g, pi, gb, background_pi)


# ---------------------------------------------------------------------------
# constraint map


@dataclass
class ConstraintValues:
    """De-densitized constraint values over dV of the data's own metric.

    phi0: Hamiltonian density coefficient.  phi_r: orthonormal radial
    component of the momentum constraint; fiber components vanish by
    symmetry and are not stored.
    """

    phi0: RadialField
    phi_r: RadialField

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(self.phi0.values)),
                         np.max(np.abs(self.phi_r.values))))


def _phi_raw(chart: RadialChart, fiber: FiberSpec, a, b, lam_rr, lam_ff):
    """Stencil-only constraint map on raw coefficient arrays.

    Dtype-agnostic (works on complex arrays, which the complex-step
    linearization exploits); always differentiates by stencils, never by
    stored analytic derivatives, so it is one fixed discrete map.
    Returns (phi0, phi_r) de-densitized against the data's own volume.
    """
    n = fiber.dim + 1
    kappa = fiber.einstein_constant
    x = chart.nodes
    pa = +1 if chart.inner_mode == "regular-center" else 0
    pb = -1 if chart.inner_mode == "regular-center" else 0
    ap, bp = d1(a, x, pa), d1(b, x, pb)
    bpp = d2(b, x, pb)
    Db = bp / a
    D2b = bpp / a**2 - ap * bp / a**3
    with np.errstate(divide="ignore", invalid="ignore"):
        scal = kappa / b**2 - 2.0 * (n - 1) * D2b / b - (n - 1) * (n - 2) * (Db / b) ** 2
        tr = lam_rr + (n - 1) * lam_ff
        norm2 = lam_rr**2 + (n - 1) * lam_ff**2
        phi0 = scal + tr**2 / (n - 1) - norm2
        phi_r = 2.0 * (d1(lam_rr, x, pa) + (n - 1) * (bp / b) * (lam_rr - lam_ff)) / a
    return _fill_center(np.asarray(phi0), chart), _fill_center(np.asarray(phi_r), chart)


def momentum_divergence(g: WarpedMetric, pi: MomentumField) -> np.ndarray:
    """Orthonormal radial component of 2 g div(pibar): the momentum
    constraint, de-densitized.

    Block reduction: 2 [lam_rr' + (n-1)(b'/b)(lam_rr - lam_ff)] / a.
    """
    n = g.n
    parity = +1 if g.chart.inner_mode == "regular-center" else 0
    dl = d1(pi.lam_rr, g.chart.nodes, parity)
    bp = metric_d1(g, "b")
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = 2.0 * (dl + (n - 1) * (bp / g.b) * (pi.lam_rr - pi.lam_ff)) / g.a
    return _fill_center(np.asarray(vals), g.chart)


def constraint_map(d: InitialDataSet) -> ConstraintValues:
    """Hamiltonian and momentum constraints of (g, pi), de-densitized.

    Uses analytic metric derivatives when the metric carries them (reference
    backgrounds evaluate exactly); otherwise the stencil map _phi_raw.
    """
    n = d.n
    if d.g.analytic:
        scal = scalar_curvature(d.g).values
        tr = d.pi.trace(n)
        phi0 = scal + tr**2 / (n - 1) - d.pi.norm2(n)
        phi_r = momentum_divergence(d.g, d.pi)
    else:
        phi0, phi_r = _phi_raw(d.g.chart, d.g.fiber, d.g.a, d.g.b,
                               d.pi.lam_rr, d.pi.lam_ff)
    return ConstraintValues(
        phi0=RadialField(d.g.chart, phi0, density_weight=1),
        phi_r=RadialField(d.g.chart, phi_r, density_weight=1),
    )


def compatibility_identity(d: InitialDataSet) -> RadialField:
    """Residual of the rewrite of Phi_0 through htilde = pibar + (n-1) g^{-1}:

        Phi_0/dV = scal_g + n(n-1) + (tr htilde)^2/(n-1) - |htilde|^2
                   - 2 tr htilde.

    Both sides share scal_g, so the residual isolates the algebraic
    momentum identity and must vanish to round-off for any data.
    """
    n = d.n
    lam_rr = d.pi.lam_rr
    lam_ff = d.pi.lam_ff
    lhs = d.pi.trace(n) ** 2 / (n - 1) - d.pi.norm2(n)
    ht_rr = lam_rr + (n - 1)
    ht_ff = lam_ff + (n - 1)
    tr_ht = ht_rr + (n - 1) * ht_ff
    norm2_ht = ht_rr**2 + (n - 1) * ht_ff**2
    rhs = n * (n - 1) + tr_ht**2 / (n - 1) - norm2_ht - 2.0 * tr_ht
    return RadialField(d.g.chart, lhs - rhs)


# ---------------------------------------------------------------------------
# linearization (finite-difference route)


@dataclass
class LinearizedConstraints:
    """DPhi(g0,pi0)(h,q) de-densitized against the background volume."""

    dphi0: RadialField
    dphi_r: RadialField


def _displaced_phi(gb: WarpedMetric, pi_b: MomentumField, pert: PerturbationPair, s):
    """Constraint values of (g0 + s h, pi0 + s q) re-expressed over dV_g0.

    s may be complex; the whole pipeline is holomorphic in the coefficient
    arrays, which makes complex-step differentiation exact.
    """
    n = gb.n
    a = gb.a * np.sqrt(1.0 + s * pert.h_rr)
    b = gb.b * np.sqrt(1.0 + s * pert.h_ff)
    jac = (gb.a * gb.b ** (n - 1)) / (a * b ** (n - 1))
    lam_rr = (pi_b.lam_rr + s * pert.q_rr) * (a**2 / gb.a**2) * jac
    lam_ff = (pi_b.lam_ff + s * pert.q_ff) * (b**2 / gb.b**2) * jac
    phi0, phi_r = _phi_raw(gb.chart, gb.fiber, a, b, lam_rr, lam_ff)
    vol = (a * b ** (n - 1)) / (gb.a * gb.b ** (n - 1))
    return phi0 * vol, phi_r * (a / gb.a) * vol


def linearized_constraints(d: InitialDataSet, pert: PerturbationPair,
                           eps: float | None = None,
                           method: str = "complex-step") -> LinearizedConstraints:
    """Numerical linearization of the constraint map at the background of d.

    Differentiates the nonlinear stencil map itself, so it is independent of
    the hand-coded adjoint formulas it is later paired against.  The default
    complex-step route has no subtraction cancellation (exact to round-off);
    "centered" does a classical two-sided difference for cross-validation.
    Values are densities re-expressed over dV_g0.
    """
    gb = d.background
    if method == "complex-step":
        h = 1e-100 if eps is None else eps
        p0, pr = _displaced_phi(gb, d.background_pi, pert, 1j * h)
        dphi0 = np.imag(p0) / h
        dphi_r = np.imag(pr) / h
    elif method == "centered":
        if eps is None:
            eps = 1e-5 / max(1.0, pert.sup())
        p0p, prp = _displaced_phi(gb, d.background_pi, pert, +eps)
        p0m, prm = _displaced_phi(gb, d.background_pi, pert, -eps)
        dphi0 = (np.real(p0p) - np.real(p0m)) / (2 * eps)
        dphi_r = (np.real(prp) - np.real(prm)) / (2 * eps)
    else:
        raise ValueError(f"unknown linearization method {method!r}")
    return LinearizedConstraints(
        dphi0=RadialField(gb.chart, dphi0, density_weight=1),
        dphi_r=RadialField(gb.chart, dphi_r, density_weight=1),
    )


# ---------------------------------------------------------------------------
# adjoint and boundary potential (hand-coded route)


def _lapse_derivatives(gb: WarpedMetric, V: LapseShift):
    parity = +1 if gb.chart.inner_mode == "regular-center" else 0
    DN = arc_d1(gb, V.N, parity=parity)
    D2N = arc_d2(gb, V.N, parity=parity)
    return DN, D2N


def _beta(gb: WarpedMetric) -> np.ndarray:
    """beta = Db/b, the logarithmic arc-length derivative of the warp."""
    Db, _ = warp_derivatives(gb)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = Db / gb.b
    return _fill_center(np.asarray(beta), gb.chart)


def adjoint_linearized(gb: WarpedMetric, V: LapseShift,
                       pert: PerturbationPair) -> RadialField:
    """<DPhi*(V), (h,q)> at the Milne background, de-densitized over dV_g0.

        h_ij (grad^i grad^j N - g0^ij Lap N) - (n-1)(n-3) N tr h - 2 N tr q

    Block Hessian of a radial lapse: (D^2 N, beta DN) with beta = Db/b.
    Only X = 0 is supported (see module docstring).
    """
    if V.has_shift:
        raise NotImplementedError("nonzero shift is outside this package's scope")
    n = gb.n
    N = V.N
    DN, D2N = _lapse_derivatives(gb, V)
    beta = _beta(gb)
    lap_N = D2N + (n - 1) * beta * DN
    tr_h = pert.tr_h(n)
    hess_pair = pert.h_rr * D2N + (n - 1) * pert.h_ff * beta * DN
    vals = (hess_pair - tr_h * lap_N
            - (n - 1.0) * (n - 3.0) * N * tr_h
            - 2.0 * N * pert.tr_q(n))
    return RadialField(gb.chart, vals, density_weight=1)


@dataclass
class BoundaryPotential:
    """Radial component of the Michel potential U, orthonormal w.r.t. the
    background and de-densitized over dV_g0."""

    chart: RadialChart
    U_r: np.ndarray
    fiber_volume: float
    fiber_dim: int
    b_background: np.ndarray

    def flux(self, R: float) -> float:
        """Flux of U through the sphere r = R: |F| b0(R)^(n-1) U_r(R)."""
        i = self.chart.node_index(R)
        return self.fiber_volume * self.b_background[i] ** self.fiber_dim * self.U_r[i]


def boundary_potential(gb: WarpedMetric, V: LapseShift,
                       pert: PerturbationPair) -> BoundaryPotential:
    """Michel potential U(V, h, q), radial orthonormal component:

        U_r = N (n-1) [beta (h_rr - h_ff) - D h_ff] + (n-1) h_ff DN
              + 2 X_r q_rr + (n-1) X_r (2 h_rr - tr h)

    This is the integration-by-parts companion of adjoint_linearized: the
    divergence of U closes the pointwise Michel identity.  The X-dependent
    tail is carried for completeness but never exercised (X = 0 throughout).
    """
    n = gb.n
    N = V.N
    DN, _ = _lapse_derivatives(gb, V)
    beta = _beta(gb)
    parity = +1 if gb.chart.inner_mode == "regular-center" else 0
    Dh_ff = arc_d1(gb, pert.h_ff, parity=parity)
    U = (N * (n - 1) * (beta * (pert.h_rr - pert.h_ff) - Dh_ff)
         + (n - 1) * pert.h_ff * DN)
    if V.has_shift:
        X = V.X
        U = U + 2.0 * X * pert.q_rr + (n - 1) * X * (2.0 * pert.h_rr - pert.tr_h(n))
    return BoundaryPotential(gb.chart, U, gb.fiber.total_volume, gb.fiber.dim, gb.b)


def michel_residual(d: InitialDataSet, V: LapseShift, R: float,
                    eps: float | None = None) -> float:
    """Defect of the integrated Michel identity on the ball of radius R:

        int_B <V, DPhi(h,q)> - flux_R(U) - int_B <DPhi*(V), (h,q)>

    with (h,q) = (g - g0, pi - pi0) read off the data set.  The first term
    uses the finite-difference linearization, the last two the hand-coded
    formulas, so the residual measures their mutual consistency; it
    converges to zero at 2nd order in the grid spacing.
    """
    gb = d.background
    if V.has_shift:
        raise NotImplementedError("nonzero shift is outside this package's scope")
    pert = d.perturbation()
    lin = linearized_constraints(d, pert, eps=eps)
    lhs = integrate_ball(V.N * lin.dphi0.values, gb, R)
    flux = boundary_potential(gb, V, pert).flux(R)
    adj = integrate_ball(adjoint_linearized(gb, V, pert).values, gb, R)
    return float(abs(lhs - flux - adj))
