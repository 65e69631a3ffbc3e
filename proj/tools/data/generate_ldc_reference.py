#!/usr/bin/env python3
"""Non-authoritative lid-driven cavity reference on an N x N lattice.

Steady incompressible Navier-Stokes on [0,1]^2, lid velocity u = A sin(pi x),
no-slip elsewhere, pressure fixed to 0 at (0,0). Solved with a second-order
streamfunction-vorticity finite-difference scheme marched to steady state
(implicit diffusion, explicit advection) on a grid refined `--refine` times
over the output lattice, then the pressure from its Neumann Poisson problem.

Output follows the lattice CSV schema read by `load_reference`.
"""

import argparse
import sys

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def laplacian(m, h):
    """5-point Laplacian on the (m-2)^2 interior nodes, Dirichlet zero."""
    n = m - 2
    d = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n))
    eye = sp.identity(n)
    return ((sp.kron(eye, d) + sp.kron(d, eye)) / h**2).tocsc()


def neumann_laplacian(m, h):
    """5-point Laplacian on all m^2 nodes with mirrored ghost nodes."""
    d = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m)).tolil()
    d[0, 1] = 2.0
    d[m - 1, m - 2] = 2.0
    d = d.tocsr()
    eye = sp.identity(m)
    return ((sp.kron(eye, d) + sp.kron(d, eye)) / h**2).tolil()


def solve(cells, A, rho, mu, dt, tol, max_steps, log):
    m = cells + 1
    h = 1.0 / cells
    nu = mu / rho
    x = np.linspace(0.0, 1.0, m)
    lid = A * np.sin(np.pi * x)
    # Arrays are indexed [i, j] with i along x and j along y.
    psi = np.zeros((m, m))
    omega = np.zeros((m, m))
    lap = laplacian(m, h)
    poisson = spla.splu(lap)
    implicit = spla.splu((sp.identity(lap.shape[0]) - dt * nu * lap).tocsc())
    n = m - 2

    def velocities(psi):
        u = np.zeros_like(psi)
        v = np.zeros_like(psi)
        u[:, 1:-1] = (psi[:, 2:] - psi[:, :-2]) / (2 * h)
        v[1:-1, :] = -(psi[2:, :] - psi[:-2, :]) / (2 * h)
        u[:, -1] = lid
        u[:, 0] = 0.0
        u[0, :] = 0.0
        u[-1, :] = 0.0
        v[:, 0] = v[:, -1] = 0.0
        v[0, :] = v[-1, :] = 0.0
        return u, v

    def wall_vorticity(psi, omega):
        omega[:, -1] = -2.0 * (psi[:, -2] + h * lid) / h**2
        omega[:, 0] = -2.0 * psi[:, 1] / h**2
        omega[0, :] = -2.0 * psi[1, :] / h**2
        omega[-1, :] = -2.0 * psi[-2, :] / h**2

    for step in range(1, max_steps + 1):
        wall_vorticity(psi, omega)
        u, v = velocities(psi)
        wx = (omega[2:, 1:-1] - omega[:-2, 1:-1]) / (2 * h)
        wy = (omega[1:-1, 2:] - omega[1:-1, :-2]) / (2 * h)
        adv = u[1:-1, 1:-1] * wx + v[1:-1, 1:-1] * wy
        # Boundary vorticity enters the implicit diffusion as known data.
        bc = np.zeros((n, n))
        bc[0, :] += omega[0, 1:-1]
        bc[-1, :] += omega[-1, 1:-1]
        bc[:, 0] += omega[1:-1, 0]
        bc[:, -1] += omega[1:-1, -1]
        rhs = omega[1:-1, 1:-1] - dt * adv + dt * nu * bc / h**2
        new = implicit.solve(rhs.ravel(order="F")).reshape((n, n), order="F")
        change = np.max(np.abs(new - omega[1:-1, 1:-1])) / dt
        omega[1:-1, 1:-1] = new
        psi[1:-1, 1:-1] = poisson.solve(-new.ravel(order="F")).reshape((n, n), order="F")
        if step % 500 == 0:
            log(f"step {step} t={step * dt:.2f} max|d omega/dt|={change:.3e}")
        if change < tol:
            log(f"steady after {step} steps (max|d omega/dt|={change:.3e})")
            break
    else:
        log(f"warning: not steady after {max_steps} steps")

    wall_vorticity(psi, omega)
    u, v = velocities(psi)
    p = pressure(u, v, omega, h, rho, mu)
    return x, u, v, p


def pressure(u, v, omega, h, rho, mu):
    """Laplace(p) = -rho (u_x^2 + 2 u_y v_x + v_y^2), normal derivative from
    the momentum equation on the walls, p(0, 0) = 0."""
    m = u.shape[0]
    ux = np.gradient(u, h, axis=0, edge_order=2)
    uy = np.gradient(u, h, axis=1, edge_order=2)
    vx = np.gradient(v, h, axis=0, edge_order=2)
    vy = np.gradient(v, h, axis=1, edge_order=2)
    wx = np.gradient(omega, h, axis=0, edge_order=2)
    wy = np.gradient(omega, h, axis=1, edge_order=2)
    f = -rho * (ux**2 + 2 * uy * vx + vy**2)
    # grad p = mu Laplace(u) - rho (u . grad) u, Laplace(u) = (-w_y, w_x).
    px = -mu * wy - rho * (u * ux + v * uy)
    py = mu * wx - rho * (u * vx + v * vy)
    # Ghost-node Neumann data: outward derivative g adds 2 g / h to the row.
    g = np.zeros_like(f)
    g[0, :] += -2.0 * px[0, :] / h
    g[-1, :] += 2.0 * px[-1, :] / h
    g[:, 0] += -2.0 * py[:, 0] / h
    g[:, -1] += 2.0 * py[:, -1] / h
    rhs = (f - g).ravel(order="F")
    lap = neumann_laplacian(m, h)
    lap[0, :] = 0.0
    lap[0, 0] = 1.0
    rhs[0] = 0.0
    p = spla.spsolve(lap.tocsc(), rhs).reshape((m, m), order="F")
    return p - p[0, 0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-n", type=int, default=64, help="output lattice size")
    ap.add_argument("--refine", type=int, default=3, help="solver cells per lattice interval")
    ap.add_argument("-A", type=float, default=1.0)
    ap.add_argument("--rho", type=float, default=1.0)
    ap.add_argument("--mu", type=float, default=0.01)
    ap.add_argument("--dt", type=float, default=2e-3)
    ap.add_argument("--tol", type=float, default=1e-7)
    ap.add_argument("--max-steps", type=int, default=100000)
    ap.add_argument("-o", "--output", default="ldc_reference_n64.csv")
    args = ap.parse_args()
    if args.n < 16:
        sys.exit("n must be >= 16")

    def log(msg):
        print(msg, file=sys.stderr, flush=True)

    cells = (args.n - 1) * args.refine
    x, u, v, p = solve(cells, args.A, args.rho, args.mu, args.dt, args.tol, args.max_steps, log)
    k = args.refine
    u, v, p = u[::k, ::k], v[::k, ::k], p[::k, ::k]
    nodes = [i / (args.n - 1) for i in range(args.n)]
    with open(args.output, "w") as out:
        out.write(f"N,channels\n{args.n},3\nx,y,u,v,p\n")
        for j in range(args.n):
            for i in range(args.n):
                vals = (nodes[i], nodes[j], u[i, j], v[i, j], p[i, j])
                out.write(",".join(repr(float(a)) for a in vals) + "\n")
    log(f"wrote {args.output}")


if __name__ == "__main__":
    main()
