"""Bound checks and energy accounting over computed trajectories.

Norms are the discrete forms the solver itself uses: the V norm of a
scalar field is the gradient L2 norm, the H norm the L2 norm, the U norm
the gradient L4 norm (element-exact for piecewise linears), and the E
norm of a vector field the elasticity quadratic form. The viscous
dissipation accumulator uses the viscosity form. Time accumulators use
the left-rectangle rule on the stepping grid, matching the implicit
Euler stepper. Violations are collected as report entries, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    GAUSS2,
    MIDPOINT_BASIS,
    assemble_elastic_operators,
    assemble_frictional_heat,
    assemble_joule_load_direct,
    assemble_joule_load_reformulated,
    assemble_p_laplacian,
    assemble_scalar_mass,
    assemble_vector_mass,
    phi_b_nodal,
    scalar_mass_full,
    scalar_stiffness_unit_full,
    theta_at_quadrature,
    u_norm4,
)
from .mesh import estimate_scalar_trace_norm, triangle_geometry

REPORT_COLUMNS = (
    "t",
    "phi_v",
    "potential_bound",
    "weighted_joule",
    "kinetic_energy",
    "viscous_dissipation",
    "theta_h",
    "theta_v_sq_accum",
    "theta_u4_accum",
    "u_e",
    "regularizer",
    "joule_gap",
)


@dataclass
class DiagnosticsReport:
    """Per-step scalar table plus the violations found while building it."""

    columns: tuple[str, ...]
    data: np.ndarray
    violations: list[str] = field(default_factory=list)
    cascade: object | None = None

    def ok(self) -> bool:
        return not self.violations

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def _boundary_l2(mesh, part: str, values: np.ndarray) -> float:
    """L2 norm of a nodal field over the boundary edges with the given tag."""
    acc = 0.0
    lengths = mesh.edge_lengths()
    for e in mesh.edges_with_tag(part):
        i, j = mesh.boundary_edges[e]
        for s in GAUSS2:
            val = (1.0 - s) * values[i] + s * values[j]
            acc += 0.5 * lengths[e] * val * val
    return float(np.sqrt(acc))


def potential_bound_constant(models, trace_tol: float = 1e-10) -> float:
    """Data-only bound on the V norm of the shifted potential.

    Combines the conductivity bounds, the exchange coefficients, and the
    boundary trace constant of the scalar free space measured against the
    gradient norm, applied to the nodal interpolant of the ambient
    potential. The electric solve satisfies the resulting inequality
    exactly in exact arithmetic.
    """
    mesh, dofs, mat, bd = models.mesh, models.dofs, models.mat, models.bd
    phib = phi_b_nodal(mesh, bd)
    k_full = scalar_stiffness_unit_full(mesh)
    m_full = scalar_mass_full(mesh)
    h1 = float(np.sqrt(phib @ (k_full @ phib) + phib @ (m_full @ phib)))
    l2_n = _boundary_l2(mesh, "N", phib)
    l2_c = _boundary_l2(mesh, "C", phib)
    if l2_n == 0.0 and l2_c == 0.0:
        gamma = 0.0
    else:
        gamma = estimate_scalar_trace_norm(mesh, dofs, tol=trace_tol)
    num = mat.M_sigma * h1 + bd.H_N * l2_n * gamma + bd.H_C_bar * l2_c * gamma
    return num / mat.sigma_star


def potential_bound(models, state) -> tuple[float, float]:
    """Both sides of the potential estimate for one converged state."""
    k_full = scalar_stiffness_unit_full(models.mesh)
    phi = np.asarray(state.phi, dtype=float)
    lhs = float(np.sqrt(max(phi @ (k_full @ phi), 0.0)))
    return lhs, potential_bound_constant(models)


def weighted_gradient_integral(models, state) -> float:
    """Quadrature value of the conductivity-weighted squared-field,
    squared-gradient integral of the total potential."""
    mesh, mat, bd = models.mesh, models.mat, models.bd
    total = np.asarray(state.phi, dtype=float) + phi_b_nodal(mesh, bd)
    tri, areas, grads = mesh.triangles, *triangle_geometry(mesh)
    g = np.einsum("ta,tia->ti", total[tri], grads)
    g2 = np.einsum("ti,ti->t", g, g)
    vals_q = total[tri] @ MIDPOINT_BASIS.T
    sigma_q = np.asarray(mat.sigma_el(theta_at_quadrature(mesh, state.theta)), dtype=float)
    return float(np.sum(areas / 3.0 * np.sum(sigma_q * vals_q**2, axis=1) * g2))


def _full_scalar(mesh, dofs, w_free: np.ndarray) -> np.ndarray:
    out = np.zeros(mesh.n_nodes)
    out[dofs.scalar_free_nodes] = w_free
    return out


def _quartic_dual_norm(mesh, dofs, r: np.ndarray, rtol: float = 1e-12,
                       max_iter: int = 60) -> float:
    """Dual norm of a free-dof functional against the gradient L4 norm.

    Solves the quartic-gradient Euler-Lagrange equation by damped Newton;
    the cube of the minimizer's U norm is the dual norm exactly.
    """
    nr = float(np.linalg.norm(r))
    if nr == 0.0:
        return 0.0
    k_free = dofs.restrict_scalar(scalar_stiffness_unit_full(mesh)).tocsr()
    w = spla.spsolve(k_free, r)
    u4 = u_norm4(mesh, _full_scalar(mesh, dofs, w))
    pairing = float(r @ w)
    w *= (pairing / u4) ** (1.0 / 3.0)

    def objective(w_free):
        return 0.25 * u_norm4(mesh, _full_scalar(mesh, dofs, w_free)) - float(r @ w_free)

    target = rtol * (1.0 + nr)
    for _ in range(max_iter):
        res, jac = assemble_p_laplacian(mesh, dofs, _full_scalar(mesh, dofs, w))
        res = res - r
        if np.linalg.norm(res) <= target:
            break
        step = spla.spsolve(jac.tocsr(), -res)
        base = objective(w)
        scale = 1.0
        for _ in range(25):
            if objective(w + scale * step) < base:
                break
            scale *= 0.5
        else:
            break
        w = w + scale * step
    return u_norm4(mesh, _full_scalar(mesh, dofs, w)) ** 0.75


def regularizer_magnitude(mesh, dofs, theta, h: float) -> tuple[float, float]:
    """Dual-norm size of the weighted quartic gradient term.

    Returns the estimate obtained by solving for the representer of the
    assembled residual alongside the closed-form majorant
    h * (U norm of theta)^3; the two coincide up to solver tolerance.
    """
    th = np.asarray(getattr(theta, "values", theta), dtype=float)
    surrogate = float(h * u_norm4(mesh, th) ** 0.75)
    res_free, _ = assemble_p_laplacian(mesh, dofs, th)
    dual = _quartic_dual_norm(mesh, dofs, h * res_free)
    return dual, surrogate


def joule_gap(models, theta, phi, t: float = 0.0) -> float:
    """Largest free-entry difference between the two Joule load forms."""
    mesh, dofs, mat, bd = models.mesh, models.dofs, models.mat, models.bd
    direct = assemble_joule_load_direct(mesh, dofs, mat, bd, theta, phi)
    reform = assemble_joule_load_reformulated(mesh, dofs, mat, bd, theta, phi,
                                              fric=models.fric, t=t)
    if not direct.size:
        return 0.0
    return float(np.abs(direct - reform).max())


def energy_report(models, trajectory, config) -> DiagnosticsReport:
    """Scalar diagnostics for every state of a trajectory.

    Checks the potential bound, the nodal traction bound, and the sign of
    the heat sources at each step; failures become violation entries.
    """
    mesh, dofs, mat, fric = models.mesh, models.dofs, models.mat, models.fric
    sfree = dofs.scalar_free_nodes
    vfree = dofs.vector_free_dofs()
    mass_s = assemble_scalar_mass(mesh, dofs).matrix
    stiff_s = dofs.restrict_scalar(scalar_stiffness_unit_full(mesh))
    mass_v = assemble_vector_mass(mesh, dofs).matrix
    visc_op, elast_op = assemble_elastic_operators(mesh, dofs, mat)
    bound_c = potential_bound_constant(models)
    traction_cap = fric.mu_bar * fric.F_bar * (1.0 + 1e-10)

    dt, h = config.dt, config.h
    data = np.zeros((len(trajectory), len(REPORT_COLUMNS)))
    violations: list[str] = []
    visc_accum = theta_v_accum = theta_u4_accum = 0.0
    for i, state in enumerate(trajectory):
        pf = state.phi[sfree]
        tf = state.theta[sfree]
        vf = state.v[vfree]
        uf = state.u[vfree]
        phi_v = float(np.sqrt(max(pf @ (stiff_s @ pf), 0.0)))
        u4 = u_norm4(mesh, state.theta)
        row = (
            state.t,
            phi_v,
            bound_c,
            weighted_gradient_integral(models, state),
            0.5 * mat.mass_mech() * float(vf @ (mass_v @ vf)),
            visc_accum,
            float(np.sqrt(max(tf @ (mass_s @ tf), 0.0))),
            theta_v_accum,
            h * theta_u4_accum,
            float(np.sqrt(max(uf @ (elast_op.matrix @ uf), 0.0))),
            h * u4**0.75,
            joule_gap(models, state.theta, state.phi, state.t),
        )
        data[i] = row
        visc_accum += dt * float(vf @ (visc_op.matrix @ vf))
        theta_v_accum += dt * float(tf @ (stiff_s @ tf))
        theta_u4_accum += dt * u4

        if phi_v > bound_c * (1.0 + 1e-8):
            violations.append(
                f"potential bound exceeded at t={state.t:.6g}: {phi_v} > {bound_c}")
        xi_c = state.xi.reshape(-1, 2)[dofs.contact_nodes]
        if xi_c.size:
            worst = float(np.linalg.norm(xi_c, axis=1).max())
            if worst > traction_cap:
                violations.append(
                    f"traction bound exceeded at t={state.t:.6g}: {worst} > {traction_cap}")
        joule = assemble_joule_load_direct(mesh, dofs, mat, models.bd,
                                           state.theta, state.phi)
        fheat = assemble_frictional_heat(mesh, dofs, fric, state.v, state.t)
        for name, load in (("joule", joule), ("frictional heat", fheat)):
            if load.size and load.min() < -1e-14:
                violations.append(
                    f"negative {name} load entry at t={state.t:.6g}: {load.min()}")
    if not np.isfinite(data).all():
        violations.append("non-finite diagnostic value")
    return DiagnosticsReport(REPORT_COLUMNS, data, violations)
