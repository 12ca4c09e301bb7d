"""Prototype: discrete Yamabe projection + regular-center perturbed trajectory."""
import numpy as np
from scipy.linalg import solve_banded

from vrmass.geometry import build_chart, hyperbolic_metric, scalar_curvature
from vrmass.constraints import _phi_raw


def yamabe_project(g0, tol=1e-11, max_iter=40):
    """Newton-solve for psi so that the stencil scalar curvature of
    psi^{2/(n-2)}-scaled coefficients is exactly -n(n-1) at interior nodes."""
    ch, fiber = g0.chart, g0.fiber
    n = fiber.dim + 1
    target = -n * (n - 1.0)
    e = 2.0 / (n - 2.0)
    M = ch.nodes.size - 1
    z = np.zeros(M + 1)

    def full_psi(u, dtype=float):
        psi = np.ones(M + 1, dtype=dtype)
        psi[1:M] = u
        # even-parity center: psi'(0)=0 via one-sided 2nd order
        psi[0] = (4.0 * psi[1] - psi[2]) / 3.0
        return psi

    def resid(u):
        psi = full_psi(u, dtype=u.dtype)
        a = psi**e * g0.a.astype(u.dtype)
        b = psi**e * g0.b.astype(u.dtype)
        s = _phi_raw(ch, fiber, a, b, z.astype(u.dtype), z.astype(u.dtype))[0]
        return s[1:M] - target

    u = np.ones(M - 1)
    F = resid(u)
    for it in range(max_iter):
        nrm = np.max(np.abs(F))
        if nrm < tol:
            return full_psi(u), nrm, it
        # tridiagonal Jacobian by 3-color complex step
        J = np.zeros((3, M - 1))  # solve_banded layout
        h = 1e-30
        for c in range(3):
            du = np.zeros(M - 1, dtype=complex)
            du[c::3] = 1j * h
            Fc = resid(u + du)
            col = np.imag(Fc) / h
            for j in range(c, M - 1, 3):
                for i in (j - 1, j, j + 1):
                    if 0 <= i < M - 1:
                        J[1 + j - i, j] += col[i] if False else 0.0
        # the above fill is wrong-ordered; assemble directly instead
        J = np.zeros((3, M - 1))
        for c in range(3):
            du = np.zeros(M - 1, dtype=complex)
            du[c::3] = 1j * h
            col = np.imag(resid(u + du)) / h
            for j in range(c, M - 1, 3):
                if j - 1 >= 0:
                    J[2, j - 1] = col[j]      # wait: layout check below
        break
    raise RuntimeError("newton failed")


# -- simpler, explicit assembly: J[i, k] entry for residual i, unknown k.
# solve_banded ab layout: ab[0, k] = J[k-1, k] (super), ab[1, k] = J[k, k],
# ab[2, k] = J[k+1, k] (sub).  Complex step on color c gives, for each
# perturbed unknown j, the response column col = dF/du_j, nonzero only at
# i in {j-1, j, j+1}.
def yamabe_project2(g0, tol=1e-11, max_iter=40):
    ch, fiber = g0.chart, g0.fiber
    n = fiber.dim + 1
    target = -n * (n - 1.0)
    e = 2.0 / (n - 2.0)
    M = ch.nodes.size - 1
    zF = np.zeros(M + 1)
    zC = np.zeros(M + 1, dtype=complex)

    def full_psi(u):
        psi = np.ones(M + 1, dtype=u.dtype)
        psi[1:M] = u
        psi[0] = (4.0 * psi[1] - psi[2]) / 3.0
        return psi

    def resid(u):
        psi = full_psi(u)
        a = psi**e * g0.a
        b = psi**e * g0.b
        zz = zC if u.dtype == complex else zF
        s = _phi_raw(ch, fiber, a, b, zz, zz)[0]
        return s[1:M] - target

    u = np.ones(M - 1)
    hstep = 1e-30
    for it in range(max_iter):
        F = resid(u)
        nrm = np.max(np.abs(F))
        if nrm < tol:
            return full_psi(u), nrm, it
        ab = np.zeros((3, M - 1))
        for c in range(3):
            du = np.zeros(M - 1, dtype=complex)
            du[c::3] = 1j * hstep
            col = np.imag(resid(u + du)) / hstep
            for j in range(c, M - 1, 3):
                if j >= 1:
                    ab[0, j] = col[j - 1]      # J[j-1, j]
                ab[1, j] = col[j]              # J[j, j]
                if j + 1 <= M - 2:
                    ab[2, j] = col[j + 1]      # J[j+1, j]
        du = solve_banded((1, 1), ab, -F)
        u = u + du
    raise RuntimeError(f"newton failed, residual {nrm:.3e}")


if __name__ == "__main__":
    ch = build_chart(400, 12.0)
    gb = hyperbolic_metric(ch)
    x = ch.nodes
    A = 0.1
    b0 = gb.b * (1 + A * np.exp(-((x - 3.0) ** 2)))
    g0 = gb.with_coefficients(gb.a.copy(), b0)
    psi, nrm, it = yamabe_project2(g0)
    print(f"newton iters {it}, residual {nrm:.3e}")
    e = 2.0 / (gb.fiber.dim + 1 - 2.0)
    gproj = gb.with_coefficients(psi**e * g0.a, psi**e * g0.b)
    s = scalar_curvature(gproj).values
    print("scal resid interior:", np.max(np.abs(s[1:-1] + 6.0)))
    print("psi range:", psi.min(), psi.max())
    print("psi-1 tail at R:", psi[-5:] - 1)
