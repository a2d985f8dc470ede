"""Time-dependent Stokes solve for the midpoint-pressure update.

Each time step requires (u', p) satisfying

    (rho/dt) u' - (mu/2) Lap u' + Grad p = rhs
    Div u' = 0

with velocity values pinned on Dirichlet walls and prescribed pressures
entering through the half-cell gradient closure on traction planes.  The
coupled saddle-point system is solved with flexible GMRES wrapped around
a single projection sweep: an implicit-viscosity Helmholtz solve per
component followed by a pressure-Poisson correction, both using cached
sparse LU factorizations.  A final exact projection (the Poisson operator
is assembled as divergence o gradient, so the identity is exact) drives
the discrete divergence to roundoff regardless of the Krylov tolerance.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import LinearSolverError
from .grid import (
    PRESSURE,
    VELOCITY,
    BoundarySpec,
    StaggeredField,
    component_shape,
    divergence,
    gradient,
    laplacian,
)


class StokesSystem:
    """Grid, material constants, time step, and boundary kinds for one run."""

    def __init__(self, grid, bc, rho, mu, dt, tol=1e-9, maxiter=200):
        if rho <= 0 or mu <= 0 or dt <= 0:
            raise ValueError("rho, mu, dt must be positive")
        self.grid = grid
        self.bc = bc
        self.rho = float(rho)
        self.mu = float(mu)
        self.dt = float(dt)
        self.tol = tol
        self.maxiter = maxiter
        self.solve_count = 0
        self._build()

    # -- 1D building blocks --------------------------------------------------

    def _lap1d(self, n, axis, d):
        """1D second difference / h^2 on the lattice of component d, axis."""
        h2 = self.grid.h ** 2
        bc = self.bc
        if bc.is_periodic(axis):
            main = -2.0 * np.ones(n)
            A = sparse.diags(
                [np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="lil"
            )
            A[0, n - 1] += 1.0
            A[n - 1, 0] += 1.0
            return (A / h2).tocsr()
        main = -2.0 * np.ones(n)
        lo, hi = bc.side(axis, False), bc.side(axis, True)
        if axis == d:
            # face lattice: end rows feel the ghost closure; velocity ends
            # get pinned later, traction ends use the copy ghost
            if lo.kind == PRESSURE:
                main[0] = -1.0
            if hi.kind == PRESSURE:
                main[-1] = -1.0
        else:
            # cell lattice: linear reflection at walls, copy at tractions
            main[0] = -1.0 if lo.kind == PRESSURE else -3.0
            main[-1] = -1.0 if hi.kind == PRESSURE else -3.0
        A = sparse.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1])
        return (A / h2).tocsr()


    def _grad1d(self, d):
        """Cells -> d-faces difference / h along axis d (with closures)."""
        h = self.grid.h
        n = self.grid.dims[d]
        bc = self.bc
        if bc.is_periodic(d):
            A = sparse.lil_matrix((n, n))
            for i in range(n):
                A[i, i] = 1.0 / h
                A[i, (i - 1) % n] = -1.0 / h
            return A.tocsr()
        A = sparse.lil_matrix((n + 1, n))
        for i in range(1, n):
            A[i, i] = 1.0 / h
            A[i, i - 1] = -1.0 / h
        lo, hi = bc.side(d, False), bc.side(d, True)
        if lo.kind == PRESSURE:
            A[0, 0] = 2.0 / h
        if hi.kind == PRESSURE:
            A[n, n - 1] = -2.0 / h
        return A.tocsr()

    def _div1d(self, d):
        """d-faces -> cells difference / h along axis d."""
        h = self.grid.h
        n = self.grid.dims[d]
        if self.bc.is_periodic(d):
            A = sparse.lil_matrix((n, n))
            for i in range(n):
                A[i, i] = -1.0 / h
                A[i, (i + 1) % n] = 1.0 / h
            return A.tocsr()
        A = sparse.lil_matrix((n, n + 1))
        for i in range(n):
            A[i, i] = -1.0 / h
            A[i, i + 1] = 1.0 / h
        return A.tocsr()

    def _kron_chain(self, mats):
        out = mats[0]
        for m in mats[1:]:
            out = sparse.kron(out, m, format="csr")
        return out

    # -- assembly --------------------------------------------------------------

    def _build(self):
        g, bc = self.grid, self.bc
        dim = g.dim
        self.shapes = [component_shape(g, bc, d) for d in range(dim)]
        self.sizes = [int(np.prod(s)) for s in self.shapes]
        self.n_cells = int(np.prod(g.dims))
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.total = self.offsets[-1] + self.n_cells

        self.L = []
        self.G = []
        self.D = []
        self.masks = []
        for d in range(dim):
            shape = self.shapes[d]
            lap_terms = []
            for a in range(dim):
                mats = []
                for ax in range(dim):
                    n_ax = shape[ax]
                    if ax == a:
                        mats.append(self._lap1d(n_ax, a, d))
                    else:
                        mats.append(sparse.identity(n_ax, format="csr"))
                lap_terms.append(self._kron_chain(mats))
            self.L.append(sum(lap_terms).tocsr())

            mats_g, mats_d = [], []
            for ax in range(dim):
                if ax == d:
                    mats_g.append(self._grad1d(d))
                    mats_d.append(self._div1d(d))
                else:
                    mats_g.append(sparse.identity(shape[ax], format="csr"))
                    mats_d.append(sparse.identity(g.dims[ax], format="csr"))
            self.G.append(self._kron_chain(mats_g))
            self.D.append(self._kron_chain(mats_d))

            # mask = 0 on Dirichlet boundary faces of this component
            mask = np.ones(shape)
            if not bc.is_periodic(d):
                idx = [slice(None)] * dim
                if bc.side(d, False).kind == VELOCITY:
                    idx[d] = 0
                    mask[tuple(idx)] = 0.0
                if bc.side(d, True).kind == VELOCITY:
                    idx[d] = shape[d] - 1
                    mask[tuple(idx)] = 0.0
            self.masks.append(mask.ravel())

        a_coef = self.rho / self.dt
        b_coef = 0.5 * self.mu
        self.helm_lu = []
        for d in range(dim):
            Mrow = sparse.diags(self.masks[d])
            A = a_coef * sparse.identity(self.sizes[d]) - b_coef * (Mrow @ self.L[d])
            self.helm_lu.append(splu(A.tocsc()))

        # pressure Poisson operator: exact divergence o masked gradient
        Lp = sum(
            (self.D[d] @ sparse.diags(self.masks[d]) @ self.G[d] for d in range(dim))
        ).tocsc()
        self.pressure_pinned = not any(
            bc.side(a, s).kind == PRESSURE
            for a in range(dim)
            for s in (False, True)
            if not bc.is_periodic(a)
        )
        if self.pressure_pinned:
            Lp = Lp.tolil()
            Lp[0, :] = 0.0
            Lp[0, 0] = 1.0
            Lp = Lp.tocsc()
        self.Lp = Lp
        self.poisson_lu = splu(Lp)

    # -- vector packing ----------------------------------------------------------

    def _pack(self, parts, p):
        return np.concatenate([q.ravel() for q in parts] + [np.asarray(p).ravel()])

    def _unpack(self, x):
        parts = []
        for d in range(self.grid.dim):
            parts.append(
                x[self.offsets[d] : self.offsets[d + 1]].reshape(self.shapes[d])
            )
        p = x[self.offsets[-1] :].reshape(self.grid.dims)
        return parts, p

    # -- operator and preconditioner ----------------------------------------------

    def _apply(self, x):
        a_coef = self.rho / self.dt
        b_coef = 0.5 * self.mu
        y = np.empty_like(x)
        p = x[self.offsets[-1] :]
        div = np.zeros(self.n_cells)
        for d in range(self.grid.dim):
            sl = slice(self.offsets[d], self.offsets[d + 1])
            u = x[sl]
            m = self.masks[d]
            y[sl] = a_coef * u - b_coef * m * (self.L[d] @ u) + m * (self.G[d] @ p)
            div += self.D[d] @ u
        y[self.offsets[-1] :] = div
        return y

    def _precondition(self, r):
        a_coef = self.rho / self.dt
        z = np.empty_like(r)
        div = np.zeros(self.n_cells)
        for d in range(self.grid.dim):
            sl = slice(self.offsets[d], self.offsets[d + 1])
            z[sl] = self.helm_lu[d].solve(r[sl])
            div += self.D[d] @ z[sl]
        rhs_p = a_coef * (div - r[self.offsets[-1] :])
        if self.pressure_pinned:
            rhs_p = rhs_p.copy()
            rhs_p[0] = 0.0
        phi = self.poisson_lu.solve(rhs_p)
        if self.pressure_pinned:
            phi = phi - phi.mean()
        for d in range(self.grid.dim):
            sl = slice(self.offsets[d], self.offsets[d + 1])
            z[sl] -= (1.0 / a_coef) * self.masks[d] * (self.G[d] @ phi)
        z[self.offsets[-1] :] = phi
        return z

    def _fgmres(self, b):
        beta = np.linalg.norm(b)
        if beta == 0.0:
            return np.zeros_like(b), 0.0, 0
        V = [b / beta]
        Z = []
        H = np.zeros((self.maxiter + 1, self.maxiter))
        res = beta
        for j in range(self.maxiter):
            z = self._precondition(V[j])
            Z.append(z)
            w = self._apply(z)
            for i in range(j + 1):
                H[i, j] = np.dot(w, V[i])
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            e1 = np.zeros(j + 2)
            e1[0] = beta
            y, lsq_res, *_ = np.linalg.lstsq(H[: j + 2, : j + 1], e1, rcond=None)
            res = np.linalg.norm(H[: j + 2, : j + 1] @ y - e1)
            if res <= self.tol * beta:
                x = np.zeros_like(b)
                for i, zi in enumerate(Z):
                    x += y[i] * zi
                return x, res / beta, j + 1
            if H[j + 1, j] < 1e-14 * beta:
                break
            V.append(w / H[j + 1, j])
        x = np.zeros_like(b)
        for i, zi in enumerate(Z):
            x += y[i] * zi
        return x, res / beta, len(Z)

    # -- public solve ----------------------------------------------------------------

    def solve(self, u_n, rhs, bc_values=None):
        """Advance the velocity through one implicit-viscosity solve.

        rhs is the assembled explicit forcing (body forces minus rho times
        the convective estimate), on the faces.  bc_values carries the
        numeric boundary data for this interval (kinds must match the
        construction-time spec).  Returns (u_next, p_half).
        """
        g = self.grid
        bc_values = self.bc if bc_values is None else bc_values
        a_coef = self.rho / self.dt
        b_coef = 0.5 * self.mu

        lap_n = laplacian(u_n, g, bc_values)
        zero_u = StaggeredField.zeros(g, bc_values)
        lap_const = laplacian(zero_u, g, bc_values)
        grad_const = gradient(np.zeros(g.dims), g, bc_values)

        rhs_parts = []
        for d in range(g.dim):
            m = self.masks[d].reshape(self.shapes[d])
            part = (
                a_coef * u_n.parts[d]
                + b_coef * lap_n.parts[d]
                + b_coef * lap_const.parts[d]
                + rhs.parts[d]
                - grad_const.parts[d]
            )
            part = m * part
            if not self.bc.is_periodic(d):
                idx = [slice(None)] * g.dim
                for hi in (False, True):
                    side = bc_values.side(d, hi)
                    if side.kind == VELOCITY:
                        idx[d] = -1 if hi else 0
                        part[tuple(idx)] = a_coef * side.velocity_component(d)
            rhs_parts.append(part)
        b = self._pack(rhs_parts, np.zeros(g.dims))

        x, rel_res, iters = self._fgmres(b)
        self.solve_count += 1
        if rel_res > self.tol * 10:
            raise LinearSolverError(
                f"Stokes solve stalled at relative residual {rel_res:.3e} "
                f"after {iters} iterations",
                residual=rel_res,
                iterations=iters,
            )

        parts, p = self._unpack(x)
        u_next = StaggeredField([q.copy() for q in parts], g)
        # pin Dirichlet faces exactly, then project the divergence away
        for d in range(g.dim):
            if self.bc.is_periodic(d):
                continue
            idx = [slice(None)] * g.dim
            for hi in (False, True):
                side = bc_values.side(d, hi)
                if side.kind == VELOCITY:
                    idx[d] = -1 if hi else 0
                    u_next.parts[d][tuple(idx)] = side.velocity_component(d)
        div = divergence(u_next, g, self.bc).ravel()
        if self.pressure_pinned:
            div[0] = 0.0
        phi = self.poisson_lu.solve(div)
        for d in range(g.dim):
            corr = (self.masks[d] * (self.G[d] @ phi)).reshape(self.shapes[d])
            u_next.parts[d] -= corr
        p = p + a_coef * phi.reshape(g.dims)
        if self.pressure_pinned:
            p = p - p.mean()
        return u_next, p

    def divergence_inf(self, u):
        return float(np.max(np.abs(divergence(u, self.grid, self.bc))))

    def kinetic_energy(self, u):
        return 0.5 * self.rho * sum(float(np.sum(q * q)) for q in u.parts) * (
            self.grid.cell_volume
        )

    def outflow_flux(self, u, axis=0, hi=True):
        """Volume flux through a domain face (positive out of the domain)."""
        comp = u.parts[axis]
        nd = comp.ndim
        idx = [slice(None)] * nd
        idx[axis] = -1 if hi else 0
        plane = comp[tuple(idx)]
        flux = float(np.sum(plane)) * self.grid.h ** (self.grid.dim - 1)
        return flux if hi else -flux


def solve_stokes(system, u_n, rhs, bc_values=None):
    """Functional wrapper over StokesSystem.solve."""
    return system.solve(u_n, rhs, bc_values)
