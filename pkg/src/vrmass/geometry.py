"""Radial charts and warped-product metrics.

Everything in this package lives on a metric of the form

    g = a(r)^2 dr^2 + b(r)^2 g_F,

where (F, g_F) is a closed (n-1)-dimensional Einstein manifold with
scal_{g_F} = kappa (constant).  The reference geometry is hyperbolic space,
a = 1, b = sinh r, with F the unit round sphere, kappa = (n-1)(n-2).

Closed-form block reductions used throughout (D = (1/a) d/dr is the
arc-length derivative, beta = Db/b):

    scal_g = kappa/b^2 - 2(n-1) D^2 b / b - (n-1)(n-2) (Db/b)^2
    H(r)   = (n-1) Db/b                      (mean curvature of the level set)
    dV_g   = a b^(n-1) dr dmu_F
    Delta_g f = D^2 f + (n-1) (Db/b) Df

Radial grids are uniform by default; all stencils are written for general
monotone nodes (3-point Lagrange formulas), so a smoothly stretched grid
degrades gracefully.  Interior stencils are centered 2nd order, boundary
stencils one-sided 2nd order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import simpson


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class RadialChart:
    """Discrete radial grid for a warped-product geometry.

    nodes are strictly increasing; inner_mode records how the inner edge is
    treated: "regular-center" means nodes[0] == 0 and fields carry a parity
    there (b odd, a even), "excision" means the ball r < nodes[0] is removed
    and one-sided stencils are used at the inner edge.
    """

    nodes: np.ndarray
    inner_mode: str
    evaluation_radii: tuple[float, ...]

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 5:
            raise ValueError("chart needs at least 5 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("chart nodes must be strictly increasing")
        if self.inner_mode not in ("regular-center", "excision"):
            raise ValueError(f"unknown inner_mode {self.inner_mode!r}")
        if self.inner_mode == "regular-center" and nodes[0] != 0.0:
            raise ValueError("regular-center chart must start at r = 0")
        if self.inner_mode == "excision" and nodes[0] <= 0.0:
            raise ValueError("excision chart must start at r > 0")
        for R in self.evaluation_radii:
            if not (nodes[0] < R <= nodes[-1]):
                raise ValueError(f"evaluation radius {R} outside chart")

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def spacing(self) -> float:
        """Mean node spacing (exact spacing for uniform charts)."""
        return float((self.nodes[-1] - self.nodes[0]) / (self.nodes.size - 1))

    def node_index(self, R: float) -> int:
        """Index of the node at radius R (must coincide with a node)."""
        i = int(np.argmin(np.abs(self.nodes - R)))
        if abs(self.nodes[i] - R) > 1e-9 * max(1.0, abs(R)):
            raise ValueError(f"radius {R} is not a chart node")
        return i


def build_chart(
    num_intervals: int,
    r_max: float,
    r_min: float = 0.0,
    inner_mode: str | None = None,
    evaluation_radii: tuple[float, ...] | None = None,
    stretch: float = 0.0,
) -> RadialChart:
    """Build a radial chart with num_intervals cells on [r_min, r_max].

    stretch > 0 compresses nodes toward r_max via a smooth exponential map
    (useful when the action is near the outer boundary); 0 gives the uniform
    grid that every quoted tolerance in the test suite assumes.
    """
    if num_intervals < 4:
        raise ValueError("need at least 4 intervals")
    if r_max <= r_min:
        raise ValueError("r_max must exceed r_min")
    xi = np.linspace(0.0, 1.0, num_intervals + 1)
    if stretch > 0.0:
        xi = (np.exp(stretch * xi) - 1.0) / (math.exp(stretch) - 1.0)
    nodes = r_min + (r_max - r_min) * xi
    nodes[0], nodes[-1] = r_min, r_max  # endpoints exact
    if inner_mode is None:
        inner_mode = "regular-center" if r_min == 0.0 else "excision"
    if evaluation_radii is None:
        lo = 0.5 * (r_min + r_max) if r_min > 0 else 0.5 * r_max
        picks = np.linspace(max(lo, r_max - 4.0), r_max, 5)
        evaluation_radii = tuple(float(nodes[np.argmin(np.abs(nodes - R))]) for R in picks)
    return RadialChart(nodes=nodes, inner_mode=inner_mode,
                       evaluation_radii=tuple(evaluation_radii))


# ---------------------------------------------------------------------------
# fibers


@dataclass(frozen=True)
class FiberSpec:
    """Closed Einstein fiber (F, g_F): dimension, scal_{g_F}, and volume."""

    dim: int
    einstein_constant: float  # scalar curvature of g_F, constant on F
    total_volume: float

    @staticmethod
    def unit_sphere(ambient_dim: int) -> "FiberSpec":
        """Round unit (n-1)-sphere fiber for ambient dimension n."""
        m = ambient_dim - 1
        if m < 2:
            raise ValueError("fiber dimension must be at least 2")
        vol = 2.0 * math.pi ** ((m + 1) / 2.0) / math.gamma((m + 1) / 2.0)
        return FiberSpec(dim=m, einstein_constant=float(m * (m - 1)), total_volume=vol)


# ---------------------------------------------------------------------------
# fields and metrics


@dataclass
class RadialField:
    """Scalar radial profile; density_weight 1 marks a scalar stored
    de-densitized, i.e. the coefficient of dV_g for the metric it rides with."""

    chart: RadialChart
    values: np.ndarray
    density_weight: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.chart.nodes.shape:
            raise ValueError("field shape does not match chart")


@dataclass
class WarpedMetric:
    """g = a^2 dr^2 + b^2 g_F sampled on a chart.

    da/db/d2a/d2b optionally carry sampled analytic r-derivatives.  Reference
    metrics built from closed forms supply them, so their curvature is exact
    to round-off; metrics assembled from bare arrays fall back to stencils.
    """

    chart: RadialChart
    fiber: FiberSpec
    a: np.ndarray
    b: np.ndarray
    da: np.ndarray | None = None
    db: np.ndarray | None = None
    d2a: np.ndarray | None = None
    d2b: np.ndarray | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.shape != self.chart.nodes.shape or self.b.shape != self.chart.nodes.shape:
            raise ValueError("metric coefficient shape does not match chart")
        if np.any(self.a <= 0):
            raise ValueError("a must be positive")
        interior = self.b if self.chart.inner_mode == "excision" else self.b[1:]
        if np.any(interior <= 0):
            raise ValueError("b must be positive away from a regular center")
        for name in ("da", "db", "d2a", "d2b"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))

    @property
    def n(self) -> int:
        return self.fiber.dim + 1

    @property
    def analytic(self) -> bool:
        return all(v is not None for v in (self.da, self.db, self.d2a, self.d2b))

    def with_coefficients(self, a=None, b=None) -> "WarpedMetric":
        """Copy with replaced coefficient arrays; analytic derivatives drop."""
        return WarpedMetric(self.chart, self.fiber,
                            self.a if a is None else a,
                            self.b if b is None else b)


def hyperbolic_metric(chart: RadialChart, fiber: FiberSpec | None = None) -> WarpedMetric:
    """Reference hyperbolic metric a = 1, b = sinh r (unit sphere fiber only).

    Default fiber: the unit round 2-sphere, i.e. hyperbolic 3-space.
    """
    if fiber is None:
        fiber = FiberSpec.unit_sphere(3)
    m = fiber.dim
    if abs(fiber.einstein_constant - m * (m - 1)) > 1e-12:
        raise ValueError("hyperbolic reference needs the unit round sphere fiber")
    r = chart.nodes
    zero = np.zeros_like(r)
    return WarpedMetric(chart, fiber, np.ones_like(r), np.sinh(r),
                        da=zero, db=np.cosh(r), d2a=zero, d2b=np.sinh(r))


# ---------------------------------------------------------------------------
# stencils

# 3-point Lagrange differentiation on general monotone nodes.  On a uniform
# grid these reduce to the usual centered / one-sided 2nd-order formulas.


def _lagrange_d1_weights(x0, x1, x2, x):
    w0 = (2 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
    w1 = (2 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
    w2 = (2 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    return w0, w1, w2


def d1(values: np.ndarray, nodes: np.ndarray, parity: int = 0) -> np.ndarray:
    """First derivative along the grid, 2nd order.

    parity (+1 even, -1 odd) activates a ghost-node reflection across r = 0
    when nodes[0] == 0, which keeps full accuracy at a regular center.
    Dtype-generic: complex inputs pass through (complex-step callers rely
    on this).
    """
    values = np.asarray(values)
    x = np.asarray(nodes, dtype=float)
    out = np.empty_like(values)
    # interior: centered on (i-1, i, i+1)
    w0, w1, w2 = _lagrange_d1_weights(x[:-2], x[1:-1], x[2:], x[1:-1])
    out[1:-1] = w0 * values[:-2] + w1 * values[1:-1] + w2 * values[2:]
    if parity != 0 and x[0] == 0.0:
        # reflected ghost at -x[1] carrying parity*values[1]
        xg = -x[1]
        w0, w1, w2 = _lagrange_d1_weights(xg, x[0], x[1], x[0])
        out[0] = w0 * parity * values[1] + w1 * values[0] + w2 * values[1]
    else:
        w0, w1, w2 = _lagrange_d1_weights(x[0], x[1], x[2], x[0])
        out[0] = w0 * values[0] + w1 * values[1] + w2 * values[2]
    w0, w1, w2 = _lagrange_d1_weights(x[-3], x[-2], x[-1], x[-1])
    out[-1] = w0 * values[-3] + w1 * values[-2] + w2 * values[-1]
    return out


def _lagrange_d2_weights(x0, x1, x2):
    w0 = 2.0 / ((x0 - x1) * (x0 - x2))
    w1 = 2.0 / ((x1 - x0) * (x1 - x2))
    w2 = 2.0 / ((x2 - x0) * (x2 - x1))
    return w0, w1, w2


def d2(values: np.ndarray, nodes: np.ndarray, parity: int = 0) -> np.ndarray:
    """Second derivative along the grid.

    2nd order on uniform grids (the default everywhere); first order on
    generic nonuniform nodes.  Endpoints use the nearest 3-point stencil,
    with a parity ghost at a regular center when requested.
    """
    values = np.asarray(values)
    x = np.asarray(nodes, dtype=float)
    out = np.empty_like(values)
    w0, w1, w2 = _lagrange_d2_weights(x[:-2], x[1:-1], x[2:])
    out[1:-1] = w0 * values[:-2] + w1 * values[1:-1] + w2 * values[2:]
    if parity != 0 and x[0] == 0.0:
        w0, w1, w2 = _lagrange_d2_weights(-x[1], x[0], x[1])
        out[0] = w0 * parity * values[1] + w1 * values[0] + w2 * values[1]
    else:
        w0, w1, w2 = _lagrange_d2_weights(x[0], x[1], x[2])
        out[0] = w0 * values[0] + w1 * values[1] + w2 * values[2]
    w0, w1, w2 = _lagrange_d2_weights(x[-3], x[-2], x[-1])
    out[-1] = w0 * values[-3] + w1 * values[-2] + w2 * values[-1]
    return out


def arc_d1(g: WarpedMetric, values: np.ndarray, parity: int = 0) -> np.ndarray:
    """Arc-length derivative Df = f'/a."""
    return d1(values, g.chart.nodes, parity) / g.a


def arc_d2(g: WarpedMetric, values: np.ndarray, parity: int = 0) -> np.ndarray:
    """Arc-length second derivative D^2 f = f''/a^2 - a' f' / a^3."""
    x = g.chart.nodes
    fp = d1(values, x, parity)
    fpp = d2(values, x, parity)
    ap = d1(g.a, x, parity=+1 if parity != 0 else 0)
    return fpp / g.a**2 - ap * fp / g.a**3


def _fill_center(values: np.ndarray, chart: RadialChart) -> np.ndarray:
    """Replace the r = 0 node by quadratic extrapolation from nodes 1..3.

    Block curvature formulas divide by b; at a regular center the 0/0 limit
    is finite for smooth data and extrapolation recovers it to 2nd order.
    """
    if chart.inner_mode != "regular-center":
        return values
    x = chart.nodes
    x0, x1, x2, x3 = x[0], x[1], x[2], x[3]
    l1 = (x0 - x2) * (x0 - x3) / ((x1 - x2) * (x1 - x3))
    l2 = (x0 - x1) * (x0 - x3) / ((x2 - x1) * (x2 - x3))
    l3 = (x0 - x1) * (x0 - x2) / ((x3 - x1) * (x3 - x2))
    out = values.copy()
    out[0] = l1 * values[1] + l2 * values[2] + l3 * values[3]
    return out


# ---------------------------------------------------------------------------
# curvature and boundary geometry


def metric_d1(g: WarpedMetric, which: str) -> np.ndarray:
    """First r-derivative of a metric coefficient, analytic when available."""
    if which == "a":
        if g.da is not None:
            return g.da
        parity = +1 if g.chart.inner_mode == "regular-center" else 0
        return d1(g.a, g.chart.nodes, parity)
    if which == "b":
        if g.db is not None:
            return g.db
        parity = -1 if g.chart.inner_mode == "regular-center" else 0
        return d1(g.b, g.chart.nodes, parity)
    raise ValueError(which)


def warp_derivatives(g: WarpedMetric):
    """(Db, D^2 b) with parity handling at a regular center (b odd, a even)."""
    if g.analytic:
        Db = g.db / g.a
        D2b = g.d2b / g.a**2 - g.da * g.db / g.a**3
        return Db, D2b
    parity = -1 if g.chart.inner_mode == "regular-center" else 0
    Db = arc_d1(g, g.b, parity=parity)
    D2b = arc_d2(g, g.b, parity=parity)
    return Db, D2b


def scalar_curvature(g: WarpedMetric) -> RadialField:
    """Scalar curvature of the warped metric as a radial profile.

    scal = kappa/b^2 - 2(n-1) D^2b/b - (n-1)(n-2) (Db/b)^2.  At a regular
    center the 0/0 node is filled by quadratic extrapolation.
    """
    n = g.n
    kappa = g.fiber.einstein_constant
    Db, D2b = warp_derivatives(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = (kappa / g.b**2
                - 2.0 * (n - 1) * D2b / g.b
                - (n - 1) * (n - 2) * (Db / g.b) ** 2)
    vals = _fill_center(np.asarray(vals), g.chart)
    return RadialField(g.chart, vals)


def ricci_block(g: WarpedMetric):
    """Orthonormal Ricci components (Ric_rr, Ric_ff) of the warped metric.

    Ric_rr = -(n-1) D^2b/b
    Ric_ff = kappa/((n-1) b^2) - D^2b/b - (n-2) (Db/b)^2
    """
    n = g.n
    Db, D2b = warp_derivatives(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        ric_rr = -(n - 1) * D2b / g.b
        ric_ff = (g.fiber.einstein_constant / (n - 1) / g.b**2
                  - D2b / g.b - (n - 2) * (Db / g.b) ** 2)
    return (_fill_center(np.asarray(ric_rr), g.chart),
            _fill_center(np.asarray(ric_ff), g.chart))


def mean_curvature_profile(g: WarpedMetric) -> np.ndarray:
    """H(r) = (n-1) Db/b of the coordinate spheres, outward normal."""
    Db, _ = warp_derivatives(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        H = (g.n - 1) * Db / g.b
    return _fill_center(np.asarray(H), g.chart)


def boundary_mean_curvature(g: WarpedMetric, R: float) -> float:
    """Mean curvature of the sphere r = R inside (M, g)."""
    i = g.chart.node_index(R)
    if g.chart.inner_mode == "regular-center" and i == 0:
        raise ValueError("mean curvature undefined at the center node")
    return float(mean_curvature_profile(g)[i])


def area(g: WarpedMetric, R: float) -> float:
    """Area of the sphere r = R: |F| b(R)^(n-1)."""
    i = g.chart.node_index(R)
    return g.fiber.total_volume * float(g.b[i]) ** (g.fiber.dim)


def integrate_ball(f, g: WarpedMetric, R: float | None = None) -> float:
    """Integral of a radial scalar over the ball/annulus up to radius R.

    int f dV_g = |F| * int f(r) a(r) b(r)^(n-1) dr, composite Simpson rule.
    Accepts a RadialField or a bare array sampled on g's chart.
    """
    vals = f.values if isinstance(f, RadialField) else np.asarray(f, dtype=float)
    if vals.shape != g.chart.nodes.shape:
        raise ValueError("integrand shape does not match chart")
    i = g.chart.nodes.size - 1 if R is None else g.chart.node_index(R)
    if i < 2:
        raise ValueError("integration range must span at least 2 cells")
    weight = vals * g.a * g.b ** (g.fiber.dim)
    return g.fiber.total_volume * float(
        simpson(weight[: i + 1], x=g.chart.nodes[: i + 1]))


def ball_volume(g: WarpedMetric, R: float | None = None) -> float:
    return integrate_ball(np.ones_like(g.chart.nodes), g, R)


def laplacian_coefficients(g: WarpedMetric):
    """(c2, c1) with Delta_g f = c2 f'' + c1 f' in the r coordinate.

    c2 = 1/a^2,  c1 = (n-1) b'/(a^2 b) - a'/a^3.
    """
    ap = metric_d1(g, "a")
    bp = metric_d1(g, "b")
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = (g.n - 1) * bp / (g.a**2 * g.b) - ap / g.a**3
    c1 = _fill_center(np.asarray(c1), g.chart)
    return 1.0 / g.a**2, c1


def laplacian(g: WarpedMetric, f: np.ndarray, parity: int = +1) -> np.ndarray:
    """Delta_g f for a radial scalar (parity of f at a regular center)."""
    c2, c1 = laplacian_coefficients(g)
    x = g.chart.nodes
    p = parity if g.chart.inner_mode == "regular-center" else 0
    return c2 * d2(f, x, p) + c1 * d1(f, x, p)


# ---------------------------------------------------------------------------
# decay diagnostics


@dataclass(frozen=True)
class DecayEstimate:
    rate: float        # delta-hat in |f| ~ C exp(-delta r)
    residual: float    # rms misfit of the log-linear model
    window: tuple[float, float]


def decay_rate_estimate(f, chart: RadialChart, window: tuple[float, float] | None = None,
                        zero_floor: float = 1e-14) -> DecayEstimate:
    """Least-squares exponential decay rate of |f| over a tail window.

    Fits log|f| = log C - delta * r on the window (default: outer quarter of
    the chart).  A field that is identically below zero_floor is reported as
    rate = +inf (decayed past measurement).  Sign changes or zeros inside the
    window make the log-fit meaningless and raise ValueError.
    """
    vals = f.values if isinstance(f, RadialField) else np.asarray(f, dtype=float)
    if window is None:
        window = (chart.r_min + 0.75 * (chart.r_max - chart.r_min), chart.r_max)
    lo, hi = window
    mask = (chart.nodes >= lo) & (chart.nodes <= hi)
    if mask.sum() < 4:
        raise ValueError("decay window must contain at least 4 nodes")
    seg = vals[mask]
    if np.all(np.abs(seg) <= zero_floor):
        return DecayEstimate(rate=math.inf, residual=0.0, window=(float(lo), float(hi)))
    if np.any(seg == 0.0) or (np.sign(seg).max() != np.sign(seg).min()):
        raise ValueError("sign changes or zeros inside the decay window")
    r = chart.nodes[mask]
    y = np.log(np.abs(seg))
    coeffs, res = np.polynomial.polynomial.polyfit(r, y, 1, full=True)
    slope = coeffs[1]
    rms = math.sqrt(float(res[0][0]) / r.size) if len(res[0]) else 0.0
    return DecayEstimate(rate=float(-slope), residual=rms, window=(float(lo), float(hi)))
