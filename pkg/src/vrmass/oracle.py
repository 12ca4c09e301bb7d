"""Generic-tensor finite-difference curvature oracle.

Independent cross-check for the closed-form warped-product reductions in
geometry.py and constraints.py.  The oracle never sees those formulas: it
builds the full coordinate metric

    G = diag(a(r)^2, b(r)^2 f_1(theta), ..., b(r)^2 f_m(theta))

on (r, theta_1, ..., theta_m) with the round-sphere fiber in nested polar
coordinates, f_k = rho^2 prod_{j<k} sin^2 theta_j, and differentiates it
numerically: Christoffel symbols from centered differences of G, Ricci from
centered differences of the Christoffel map, scalar curvature by trace.

Accuracy is limited by the nested differencing (~1e-7 relative), far below
the O(h^2) grid error of the fast path it polices.

All inputs are callables of r; nothing here reads grid arrays, stencil code,
or block formulas.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import FiberSpec

# step for first derivatives of the metric (Christoffel level)
H_METRIC = 1e-6
# step for derivatives of the Christoffel map (Ricci level)
H_GAMMA = 2e-4


def _fiber_radius(fiber: FiberSpec) -> float:
    m = fiber.dim
    if fiber.einstein_constant <= 0:
        raise NotImplementedError("oracle supports round-sphere fibers only")
    # scal of a radius-rho round m-sphere is m(m-1)/rho^2
    return math.sqrt(m * (m - 1) / fiber.einstein_constant)


def _metric_matrix(x: np.ndarray, a, b, rho: float) -> np.ndarray:
    d = x.size
    diag = np.empty(d)
    diag[0] = a(x[0]) ** 2
    fib = rho**2
    for k in range(1, d):
        diag[k] = b(x[0]) ** 2 * fib
        fib *= math.sin(x[k]) ** 2
    return np.diag(diag)


def _christoffel(x: np.ndarray, a, b, rho: float, h: float = H_METRIC) -> np.ndarray:
    d = x.size
    dg = np.empty((d, d, d))
    for l in range(d):
        xp, xm = x.copy(), x.copy()
        xp[l] += h
        xm[l] -= h
        dg[l] = (_metric_matrix(xp, a, b, rho) - _metric_matrix(xm, a, b, rho)) / (2 * h)
    ginv = np.linalg.inv(_metric_matrix(x, a, b, rho))
    # body[l,j,k] = d_j g_{lk} + d_k g_{jl} - d_l g_{jk}
    body = dg.transpose(1, 0, 2) + dg.transpose(2, 1, 0) - dg
    # Gamma^i_{jk} = 1/2 g^{il} body[l,j,k]
    return 0.5 * np.einsum("il,ljk->ijk", ginv, body)


def ricci_tensor(x: np.ndarray, a, b, rho: float) -> np.ndarray:
    """Coordinate Ricci tensor at the point x by nested differencing."""
    d = x.size
    dgam = np.empty((d, d, d, d))
    for l in range(d):
        xp, xm = x.copy(), x.copy()
        xp[l] += H_GAMMA
        xm[l] -= H_GAMMA
        dgam[l] = (_christoffel(xp, a, b, rho) - _christoffel(xm, a, b, rho)) / (2 * H_GAMMA)
    gam = _christoffel(x, a, b, rho)
    # R_{ij} = d_k Gamma^k_{ij} - d_j Gamma^k_{ik}
    #        + Gamma^k_{kl} Gamma^l_{ij} - Gamma^k_{jl} Gamma^l_{ik}
    ric = (np.einsum("kkij->ij", dgam)
           - np.einsum("jkik->ij", dgam)
           + np.einsum("kkl,lij->ij", gam, gam)
           - np.einsum("kjl,lik->ij", gam, gam))
    return 0.5 * (ric + ric.T)


def _base_point(r: float, dim: int) -> np.ndarray:
    # fiber angles away from the polar coordinate degeneracies
    return np.array([r] + [0.7 + 0.11 * k for k in range(dim - 1)])


def scalar_curvature_at(r: float, a, b, fiber: FiberSpec) -> float:
    """Oracle scalar curvature of a^2 dr^2 + b^2 g_F at radius r."""
    rho = _fiber_radius(fiber)
    x = _base_point(r, fiber.dim + 1)
    G = _metric_matrix(x, a, b, rho)
    ric = ricci_tensor(x, a, b, rho)
    return float(np.trace(np.linalg.solve(G, ric)))


def mean_curvature_at(r: float, a, b, fiber: FiberSpec) -> float:
    """Oracle mean curvature of the sphere r = const, outward unit normal.

    H = g^{AB} K_AB with K_AB = (1/2a) d_r g_AB, no warped shortcut.
    """
    rho = _fiber_radius(fiber)
    x = _base_point(r, fiber.dim + 1)
    h = H_METRIC

    def slice_metric(rr):
        xp = x.copy()
        xp[0] = rr
        return _metric_matrix(xp, a, b, rho)[1:, 1:]

    dgdr = (slice_metric(r + h) - slice_metric(r - h)) / (2 * h)
    K = dgdr / (2.0 * a(r))
    return float(np.trace(np.linalg.solve(slice_metric(r), K)))


def momentum_divergence_at(r: float, a, b, lam_rr, lam_ff, fiber: FiberSpec) -> float:
    """Oracle radial momentum constraint 2 g_{rk} div(pi)^k at radius r.

    pi here is the de-densitized field with g-orthonormal eigenvalues
    lam_rr(r) (radial) and lam_ff(r) (fiber); its coordinate components are
    pi^{rr} = lam_rr/a^2, pi^{AB} = lam_ff g^{AB}.  The covariant divergence
    uses oracle Christoffels only.
    """
    rho = _fiber_radius(fiber)
    d = fiber.dim + 1
    x = _base_point(r, d)

    def pi_upper(xx):
        ginv = np.linalg.inv(_metric_matrix(xx, a, b, rho))
        out = lam_ff(xx[0]) * ginv
        out[0, 0] = lam_rr(xx[0]) / a(xx[0]) ** 2
        return out

    h = H_GAMMA
    dpi = np.empty((d, d, d))
    for l in range(d):
        xp, xm = x.copy(), x.copy()
        xp[l] += h
        xm[l] -= h
        dpi[l] = (pi_upper(xp) - pi_upper(xm)) / (2 * h)
    gam = _christoffel(x, a, b, rho)
    # div(pi)^i = d_j pi^{ji} + Gamma^j_{jl} pi^{li} + Gamma^i_{jl} pi^{jl}
    div = (np.einsum("jji->i", dpi)
           + np.einsum("jjl,li->i", gam, pi_upper(x))
           + np.einsum("ijl,jl->i", gam, pi_upper(x)))
    grr = a(r) ** 2
    return float(2.0 * grr * div[0])
