"""The coupled time step: predictor, force spreading, Stokes solve,
midpoint corrector, and lumped-circulation sub-coupling.

Per step (after the first):

  1. half-step the structures with forward Euler using u^n,
  2. evaluate fiber and solid force densities at the predicted configs,
  3. spread them to the grid,
  4. form the Adams-Bashforth convective estimate
     1.5 u^n.grad u^n - 0.5 u^(n-1).grad u^(n-1),
  5. one Stokes solve (Crank-Nicolson viscosity) for u^(n+1), p,
  6. midpoint-correct the structures with (u^n + u^(n+1))/2 interpolated
     at the predicted configurations,
  7. advance the Windkessel with the outlet flux of u^(n+1).

The first step replaces the AB2 estimate with a two-stage Runge-Kutta
(trapezoidal) correction, costing one extra Stokes solve, and fills the
u^(n-1) history.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circulation import (
    MMHG_TO_CGS,
    DrivingWaveform,
    SampledWaveform,
    WindkesselState,
    advance_windkessel,
    lv_pressure,
    sampled_pressure,
)
from .errors import ConfigError
from .fesolid import (
    build_quadrature,
    restrict_solid_velocity,
    spread_solid_force,
)
from .fiber import elastic_force, interp_fiber_velocity, spread_fiber_force
from .fluid import StokesSystem
from .grid import StaggeredField, convective
from .kernels import IB4


@dataclass
class FEBody:
    """A volumetric solid and its material (CGS stress units).

    Optional anchors realize semi-rigid regions: nodal springs of
    stiffness anchor_k pulling anchor_ids back to their reference
    positions, added to the weak-form force before the mass solve.
    """

    mesh: object
    law: object
    anchor_ids: object = None
    anchor_k: float = 0.0

    def force_density(self, coords):
        from .fesolid import internal_nodal_forces

        R = internal_nodal_forces(self.mesh, self.law, coords)
        if self.anchor_ids is not None and self.anchor_k > 0.0:
            ids = self.anchor_ids
            R[ids] += -self.anchor_k * (coords[ids] - self.mesh.nodes[ids])
        return self.mesh.mass_solve(R)


@dataclass
class CirculationCoupling:
    """Upstream driving waveform and downstream Windkessel at the duct ends
    (inlet = x-lo traction plane, outlet = x-hi traction plane)."""

    waveform: object
    windkessel: WindkesselState

    def driving_pressure(self, t):
        if isinstance(self.waveform, SampledWaveform):
            return sampled_pressure(t, self.waveform)
        return lv_pressure(t, self.waveform)


@dataclass
class Scene:
    """Everything the stepper needs: grid, fluid constants, structures."""

    grid: object
    bc: object
    rho: float
    mu: float
    kernel: object = IB4
    fiber_meshes: list = field(default_factory=list)
    tethers: list = field(default_factory=list)      # aligned with fiber_meshes
    fe_bodies: list = field(default_factory=list)
    circulation: CirculationCoupling = None

    def __post_init__(self):
        while len(self.tethers) < len(self.fiber_meshes):
            self.tethers.append(None)


class SimulationState:
    """Time-marching state: Eulerian velocity (+AB2 history), structure
    positions live in the scene meshes, Windkessel pressure, counters."""

    def __init__(self, scene, dt, tol=1e-9):
        self.scene = scene
        self.dt = float(dt)
        self.u = StaggeredField.zeros(scene.grid, scene.bc)
        self.u_prev = None
        self.t = 0.0
        self.n = 0
        self.q_outlet = 0.0
        self.p_lv = 0.0
        self.p_ao = 0.0
        self.solver = StokesSystem(
            scene.grid, scene.bc, scene.rho, scene.mu, self.dt, tol=tol
        )
        if scene.circulation is not None:
            self.p_ao = scene.circulation.windkessel.P_stored
            self.p_lv = scene.circulation.driving_pressure(0.0)

    @property
    def stokes_solves(self):
        return self.solver.solve_count


def _boundary_values(state, t_mid):
    scene = state.scene
    if scene.circulation is None:
        return scene.bc
    p_lv = scene.circulation.driving_pressure(t_mid)
    wk = scene.circulation.windkessel
    p_ao = wk.P_stored + wk.Rc * state.q_outlet
    state.p_lv = p_lv
    state.p_ao = p_ao
    return scene.bc.with_pressures(p_lv * MMHG_TO_CGS, p_ao * MMHG_TO_CGS)


def _predict_structures(state, dt):
    """Forward-Euler half step; returns predicted configs and FE quadratures."""
    scene = state.scene
    g, bc, kern = scene.grid, scene.bc, scene.kernel
    fiber_half = []
    for m in scene.fiber_meshes:
        v = interp_fiber_velocity(state.u, m, g, kern, bc)
        fiber_half.append(m.x + 0.5 * dt * v)
    solid_half, quads = [], []
    for body in scene.fe_bodies:
        quad = build_quadrature(body.mesh, g.h, coords=body.mesh.current)
        U = restrict_solid_velocity(state.u, quad, body.mesh, g, kern, bc)
        chi_half = body.mesh.current + 0.5 * dt * U
        quad_half = build_quadrature(body.mesh, g.h, coords=chi_half)
        solid_half.append(chi_half)
        quads.append(quad_half)
    return fiber_half, solid_half, quads


def _spread_forces(state, fiber_half, solid_half, quads):
    scene = state.scene
    g, bc, kern = scene.grid, scene.bc, scene.kernel
    total = StaggeredField.zeros(g, bc)
    for m, tet, x_half in zip(scene.fiber_meshes, scene.tethers, fiber_half):
        F = elastic_force(m, x_half)
        if tet is not None:
            F = F + tet.force_density(m, x_half)
        total = total + spread_fiber_force(F, m, g, kern, bc, x=x_half)
    solid_G = []
    for body, chi_half, quad in zip(scene.fe_bodies, solid_half, quads):
        G = body.force_density(chi_half)
        solid_G.append(G)
        total = total + spread_solid_force(
            G, quad, body.mesh, g, kern, bc, coords=chi_half
        )
    return total, solid_G


def _correct_structures(state, dt, u_mid, fiber_half, solid_half, quads):
    scene = state.scene
    g, bc, kern = scene.grid, scene.bc, scene.kernel
    for m, x_half in zip(scene.fiber_meshes, fiber_half):
        v = interp_fiber_velocity(u_mid, m, g, kern, bc, x=x_half)
        m.x = m.x + dt * v
    for body, chi_half, quad in zip(scene.fe_bodies, solid_half, quads):
        U = restrict_solid_velocity(u_mid, quad, body.mesh, g, kern, bc, coords=chi_half)
        body.mesh.current = body.mesh.current + dt * U


def _advance_circulation(state, dt):
    scene = state.scene
    if scene.circulation is None:
        return
    q = state.solver.outflow_flux(state.u, axis=0, hi=True)
    wk, p_ao = advance_windkessel(scene.circulation.windkessel, q, dt)
    scene.circulation.windkessel = wk
    state.q_outlet = q
    state.p_ao = p_ao


def step(state, dt=None):
    """One coupled step with the AB2 convective estimate (single Stokes solve)."""
    dt = state.dt if dt is None else dt
    if state.u_prev is None:
        return initial_step(state, dt)
    scene = state.scene
    g, bc = scene.grid, scene.bc
    bc_now = _boundary_values(state, state.t + 0.5 * dt)
    fiber_half, solid_half, quads = _predict_structures(state, dt)
    force, _ = _spread_forces(state, fiber_half, solid_half, quads)
    conv_now = convective(state.u, g, bc_now)
    conv_old = convective(state.u_prev, g, bc_now)
    rhs = StaggeredField(
        [
            f - scene.rho * (1.5 * a - 0.5 * b)
            for f, a, b in zip(force.parts, conv_now.parts, conv_old.parts)
        ],
        g,
    )
    u_next, p = state.solver.solve(state.u, rhs, bc_now)
    u_mid = 0.5 * (state.u + u_next)
    _correct_structures(state, dt, u_mid, fiber_half, solid_half, quads)
    state.u_prev = state.u
    state.u = u_next
    state.p = p
    state.t += dt
    state.n += 1
    _advance_circulation(state, dt)
    return state


def initial_step(state, dt=None):
    """Two-stage Runge-Kutta start: two Stokes solves, then AB2 history."""
    dt = state.dt if dt is None else dt
    if state.n != 0 or state.u_prev is not None:
        raise ConfigError("initial_step requires a fresh state")
    scene = state.scene
    g, bc = scene.grid, scene.bc
    bc_now = _boundary_values(state, state.t + 0.5 * dt)
    fiber_half, solid_half, quads = _predict_structures(state, dt)
    force, _ = _spread_forces(state, fiber_half, solid_half, quads)
    conv0 = convective(state.u, g, bc_now)
    rhs = StaggeredField(
        [f - scene.rho * c for f, c in zip(force.parts, conv0.parts)], g
    )
    u_star, _ = state.solver.solve(state.u, rhs, bc_now)
    conv_star = convective(u_star, g, bc_now)
    rhs2 = StaggeredField(
        [
            f - scene.rho * 0.5 * (a + b)
            for f, a, b in zip(force.parts, conv0.parts, conv_star.parts)
        ],
        g,
    )
    u_next, p = state.solver.solve(state.u, rhs2, bc_now)
    u_mid = 0.5 * (state.u + u_next)
    _correct_structures(state, dt, u_mid, fiber_half, solid_half, quads)
    state.u_prev = state.u
    state.u = u_next
    state.p = p
    state.t += dt
    state.n += 1
    _advance_circulation(state, dt)
    return state


def stable_dt_estimate(state, dt_cap=None):
    """Advisory step bound: advective CFL and a stiffness wave-speed bound.

    Never enforced.  The advective bound keeps max|u| dt / h <= 0.3; the
    structural bound is dt <= 0.5 sqrt(rho h^3 / k) per fiber stiffness k
    and dt <= h / sqrt(E / rho) per solid with modulus scale
    E = c (1 + 2 b).  At production scale (h around 0.08 cm with
    physiological jets) these bounds land near 1e-5 s.
    """
    scene = state.scene
    h = scene.grid.h
    cap = state.dt if dt_cap is None else dt_cap
    bounds = [cap]
    umax = state.u.max_abs()
    if umax > 0:
        bounds.append(0.3 * h / umax)
    for m in scene.fiber_meshes:
        kmax = float(np.max(m.kstretch))
        if kmax > 0:
            bounds.append(0.5 * np.sqrt(scene.rho * h ** 3 / kmax))
    for body in scene.fe_bodies:
        E = body.law.c * (1.0 + 2.0 * body.law.b)
        bounds.append(h / np.sqrt(E / scene.rho))
    return min(bounds)
