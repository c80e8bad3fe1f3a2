"""Regularized slip-rate friction law and the implicit momentum step.

The tangential traction at a contact node is

    xi(v) = mu(r_eps) F v_tau / r_eps,   r_eps = sqrt(|v_tau|^2 + eps^2),

a smoothing of the set-valued law xi in mu(|v_tau|) F unit(v_tau). The
smoothed map keeps the traction bound |xi| <= mu_bar F exactly and satisfies
the same one-sided monotonicity estimate as the exact law,

    (xi(v1) - xi(v2)) . (v1 - v2) >= -F d_mu |v1 - v2|^2,

so every stability argument that consumes those two properties applies
unchanged. Nodal tractions are paired with test functions through the
contact boundary mass of the P1 interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .assembly import (
    assemble_elastic_operators,
    assemble_mech_load,
    assemble_thermal_coupling,
    assemble_vector_mass,
    contact_vector_mass_full,
)
from .materials import BoundaryData, FrictionModel, MaterialModel
from .mesh import DofMap, Mesh


class SolverError(RuntimeError):
    """A nonlinear solve failed to reach its residual tolerance."""


@dataclass
class RegularizedFriction:
    """Friction law with an eps-smoothed slip-rate magnitude."""

    fric: FrictionModel
    eps: float = 1e-8

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ValueError("regularization parameter must be positive")

    def smoothed_rate(self, vt: np.ndarray) -> np.ndarray:
        vt = np.asarray(vt, dtype=float)
        return np.sqrt(np.einsum("...i,...i", vt, vt) + self.eps**2)

    def traction(self, vt: np.ndarray, F: np.ndarray) -> np.ndarray:
        """Tangential traction for slip velocities vt (m, 2) and tractions F (m,)."""
        vt = np.atleast_2d(np.asarray(vt, dtype=float))
        r = self.smoothed_rate(vt)
        c = np.asarray(self.fric.mu(r), dtype=float) * np.asarray(F, dtype=float) / r
        return c[:, None] * vt

    def traction_jacobian(self, vt: np.ndarray, F: np.ndarray) -> np.ndarray:
        """(m, 2, 2) derivative of the traction with respect to vt."""
        vt = np.atleast_2d(np.asarray(vt, dtype=float))
        F = np.asarray(F, dtype=float)
        r = self.smoothed_rate(vt)
        mu = np.asarray(self.fric.mu(r), dtype=float)
        if self.fric.mu_prime is not None:
            dmu = np.asarray(self.fric.mu_prime(r), dtype=float)
        else:
            h = 1e-7
            dmu = (np.asarray(self.fric.mu(r + h), dtype=float)
                   - np.asarray(self.fric.mu(np.maximum(r - h, 0.0)), dtype=float)) / (2 * h)
        outer = np.einsum("mi,mj->mij", vt, vt)
        eye = np.eye(2)[None]
        core = (dmu / r**2 - mu / r**3)[:, None, None] * outer + (mu / r)[:, None, None] * eye
        return F[:, None, None] * core

    def potential(self, r: np.ndarray) -> np.ndarray:
        """Antiderivative of mu, evaluated at slip rates r >= 0."""
        r = np.asarray(r, dtype=float)
        if self.fric.mu_antiderivative is not None:
            return np.asarray(self.fric.mu_antiderivative(r), dtype=float)
        flat = np.ravel(r)
        out = np.array([scipy.integrate.quad(lambda s: float(self.fric.mu(s)), 0.0, float(x))[0]
                        for x in flat])
        return out.reshape(np.shape(r))


def nodal_tangential(dofs: DofMap, v_full: np.ndarray) -> np.ndarray:
    """(m, 2) tangential parts of a full velocity vector at the contact nodes."""
    vp = v_full.reshape(-1, 2)[dofs.contact_nodes]
    nu = dofs.contact_normal
    return vp - np.einsum("mi,mi->m", vp, nu)[:, None] * nu


def contact_traction_full(mesh: Mesh, dofs: DofMap, rfric: RegularizedFriction,
                          v_full: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Full (2N,) nodal traction field, zero away from the contact part."""
    out = np.zeros_like(v_full)
    if dofs.contact_nodes.size == 0:
        return out
    vt = nodal_tangential(dofs, v_full)
    F = np.asarray(rfric.fric.F_field(mesh.nodes[dofs.contact_nodes], t), dtype=float)
    xi = rfric.traction(vt, F)
    idx = dofs.contact_nodes
    out[2 * idx] = xi[:, 0]
    out[2 * idx + 1] = xi[:, 1]
    return out


def _traction_jacobian_full(mesh: Mesh, dofs: DofMap, rfric: RegularizedFriction,
                            v_full: np.ndarray, t: float) -> sp.csr_matrix:
    """(2N, 2N) block-diagonal derivative of the nodal traction field."""
    n2 = v_full.size
    if dofs.contact_nodes.size == 0:
        return sp.csr_matrix((n2, n2))
    vt = nodal_tangential(dofs, v_full)
    F = np.asarray(rfric.fric.F_field(mesh.nodes[dofs.contact_nodes], t), dtype=float)
    jac_t = rfric.traction_jacobian(vt, F)
    nu = dofs.contact_normal
    proj = np.eye(2)[None] - np.einsum("mi,mj->mij", nu, nu)
    blocks = np.einsum("mij,mjk->mik", jac_t, proj)
    idx = dofs.contact_nodes
    rows = np.repeat(np.stack([2 * idx, 2 * idx + 1], axis=1), 2, axis=1).ravel()
    cols = np.tile(np.stack([2 * idx, 2 * idx + 1], axis=1), (1, 2)).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(n2, n2))


def friction_functional(mesh: Mesh, dofs: DofMap, rfric: RegularizedFriction,
                        v_full: np.ndarray, t: float = 0.0) -> float:
    """Contact integral of F times the slip-rate potential of |v_tau|."""
    vv = v_full.reshape(-1, 2)
    lengths = mesh.edge_lengths()
    gauss = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
    total = 0.0
    for e in mesh.edges_with_tag("C"):
        i, j = mesh.boundary_edges[e]
        a, b = mesh.nodes[i], mesh.nodes[j]
        nu = mesh.edge_normals[e]
        for g in gauss:
            x = a + g * (b - a)
            basis = np.array([1.0 - g, g])
            vq = basis @ vv[[i, j]]
            vt = vq - (vq @ nu) * nu
            fv = float(np.asarray(rfric.fric.F_field(x[None, :], t)).ravel()[0])
            total += 0.5 * lengths[e] * fv * float(rfric.potential(float(np.linalg.norm(vt))))
    return total


def check_subgradient_properties(rfric: RegularizedFriction, n_pairs: int = 10_000,
                                 seed: int = 0) -> dict:
    """Sampled worst cases of the traction bound and the monotonicity estimate.

    Draws slip-velocity pairs across magnitudes from well below the smoothing
    scale to order ten; half the pairs are collinear or nearly collinear,
    where a slip-weakening coefficient stresses the monotonicity constant
    hardest. Returns the largest observed violations (negative or tiny
    positive values mean the property holds).
    """
    rng = np.random.default_rng(seed)
    eps = rfric.eps
    scales = 10.0 ** rng.uniform(np.log10(eps) - 1.0, 1.0, size=(n_pairs, 2))
    dirs = rng.normal(size=(n_pairs, 2, 2))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    quarter = n_pairs // 4
    dirs[:quarter, 1] = dirs[:quarter, 0]
    near = dirs[quarter:2 * quarter, 0] + 0.05 * rng.normal(size=(quarter, 2))
    dirs[quarter:2 * quarter, 1] = near / np.linalg.norm(near, axis=1, keepdims=True)
    v1 = scales[:, 0, None] * dirs[:, 0]
    v2 = scales[:, 1, None] * dirs[:, 1]
    F = rng.uniform(0.0, 1.0, size=n_pairs) * rfric.fric.F_bar * 2.0

    xi1 = rfric.traction(v1, F)
    xi2 = rfric.traction(v2, F)
    norm1 = np.linalg.norm(xi1, axis=1)
    bound_violation = float((norm1 - rfric.fric.mu_bar * F).max())

    dv = v1 - v2
    pair = np.einsum("mi,mi->m", xi1 - xi2, dv)
    slack = pair + F * rfric.fric.d_mu * np.einsum("mi,mi->m", dv, dv)
    return {
        "bound_violation": bound_violation,
        "monotonicity_violation": float((-slack).max()),
        "n_pairs": int(n_pairs),
    }


def check_subgradient_pairing(mesh: Mesh, dofs: DofMap, rfric: RegularizedFriction,
                              lumped_weights: np.ndarray, n_pairs: int = 100,
                              seed: int = 0, t: float = 0.0) -> float:
    """Monotonicity estimate in the lumped contact inner product.

    The nodal property transfers to any positively weighted sum, so the
    worst violation over random velocity pairs should sit at roundoff.
    """
    rng = np.random.default_rng(seed)
    m = dofs.contact_nodes.size
    if m == 0:
        return 0.0
    F = np.asarray(rfric.fric.F_field(mesh.nodes[dofs.contact_nodes], t), dtype=float)
    worst = -np.inf
    for _ in range(n_pairs):
        v1 = rng.normal(size=(m, 2)) * 10.0 ** rng.uniform(-6, 1)
        v2 = rng.normal(size=(m, 2)) * 10.0 ** rng.uniform(-6, 1)
        nu = dofs.contact_normal
        vt1 = v1 - np.einsum("mi,mi->m", v1, nu)[:, None] * nu
        vt2 = v2 - np.einsum("mi,mi->m", v2, nu)[:, None] * nu
        dxi = rfric.traction(vt1, F) - rfric.traction(vt2, F)
        dv = vt1 - vt2
        lhs = float(np.sum(lumped_weights * np.einsum("mi,mi->m", dxi, dv)))
        rhs = -rfric.fric.d_mu * float(np.sum(lumped_weights * F * np.einsum("mi,mi->m", dv, dv)))
        worst = max(worst, rhs - lhs)
    return worst


@dataclass
class MomentumOperators:
    """Constant matrices of the momentum equation on free vector dofs."""

    mass: sp.csr_matrix
    visc: sp.csr_matrix
    elast: sp.csr_matrix
    contact_rows: sp.csr_matrix  # free rows of the full contact pairing


def build_momentum_operators(mesh: Mesh, dofs: DofMap, mat: MaterialModel) -> MomentumOperators:
    visc, elast = assemble_elastic_operators(mesh, dofs, mat)
    mass = assemble_vector_mass(mesh, dofs)
    vfree = dofs.vector_free_dofs()
    contact_rows = contact_vector_mass_full(mesh)[vfree, :].tocsr()
    return MomentumOperators(mass.matrix, visc.matrix, elast.matrix, contact_rows)


def solve_momentum_step(mesh: Mesh, dofs: DofMap, mat: MaterialModel, rfric: RegularizedFriction,
                        ops: MomentumOperators, bd: BoundaryData, dt: float, t_new: float,
                        u_old: np.ndarray, v_old: np.ndarray, theta_del: np.ndarray,
                        max_iter: int = 50, rtol: float = 1e-10):
    """One implicit Euler step of the momentum balance with nodal friction.

    u_old and v_old live on free vector dofs; theta_del is the full delayed
    temperature field. Returns (v_new, u_new, xi_full, info); the terminal
    residual satisfies |res| <= rtol (1 + |load|) or SolverError is raised.

    The velocity update is damped Newton: the traction law is smooth, its
    nodal Jacobian is exact, and steps are halved (at most 20 times) until
    the residual norm decreases.
    """
    vfree = dofs.vector_free_dofs()
    rho_dt = mat.mass_mech() / dt
    load = assemble_mech_load(mesh, dofs, bd, rfric.fric, t_new)
    coup = assemble_thermal_coupling(mesh, dofs, mat, theta_del)
    rhs_const = load - coup + rho_dt * (ops.mass @ v_old) - ops.elast @ u_old
    base = (rho_dt * ops.mass + ops.visc + dt * ops.elast).tocsr()
    n_full = 2 * mesh.n_nodes
    target = rtol * (1.0 + float(np.linalg.norm(load)))

    def residual(v_free):
        v_full = np.zeros(n_full)
        v_full[vfree] = v_free
        xi = contact_traction_full(mesh, dofs, rfric, v_full, t_new)
        res = base @ v_free + ops.contact_rows @ xi - rhs_const
        return res, xi, v_full

    v = v_old.copy()
    res, xi, v_full = residual(v)
    res_norm = float(np.linalg.norm(res))
    iterations = 0
    while res_norm > target:
        if iterations >= max_iter:
            raise SolverError(
                f"momentum step at t={t_new:.6g} stalled after {max_iter} iterations; "
                f"residual {res_norm:.3e} > {target:.3e}")
        dmat = _traction_jacobian_full(mesh, dofs, rfric, v_full, t_new)
        jac = base + (ops.contact_rows @ dmat)[:, vfree]
        delta = spsolve(jac.tocsr(), -res)
        alpha = 1.0
        for _ in range(20):
            trial = v + alpha * delta
            res_t, xi_t, v_full_t = residual(trial)
            norm_t = float(np.linalg.norm(res_t))
            if norm_t < res_norm:
                break
            alpha *= 0.5
        else:
            raise SolverError(
                f"momentum line search at t={t_new:.6g} found no descent; "
                f"residual {res_norm:.3e}")
        v, res, xi, v_full, res_norm = trial, res_t, xi_t, v_full_t, norm_t
        iterations += 1

    u_new = u_old + dt * v
    info = {"iterations": iterations, "residual": res_norm, "target": target}
    return v, u_new, xi, info


def momentum_residual(mesh: Mesh, dofs: DofMap, mat: MaterialModel, rfric: RegularizedFriction,
                      ops: MomentumOperators, bd: BoundaryData, dt: float, t_new: float,
                      u_old: np.ndarray, v_old: np.ndarray, theta_del: np.ndarray,
                      v_free: np.ndarray):
    """Residual and exact Jacobian of the implicit step at a trial velocity."""
    vfree = dofs.vector_free_dofs()
    rho_dt = mat.mass_mech() / dt
    load = assemble_mech_load(mesh, dofs, bd, rfric.fric, t_new)
    coup = assemble_thermal_coupling(mesh, dofs, mat, theta_del)
    rhs_const = load - coup + rho_dt * (ops.mass @ v_old) - ops.elast @ u_old
    base = (rho_dt * ops.mass + ops.visc + dt * ops.elast).tocsr()
    v_full = np.zeros(2 * mesh.n_nodes)
    v_full[vfree] = v_free
    xi = contact_traction_full(mesh, dofs, rfric, v_full, t_new)
    res = base @ v_free + ops.contact_rows @ xi - rhs_const
    dmat = _traction_jacobian_full(mesh, dofs, rfric, v_full, t_new)
    jac = base + (ops.contact_rows @ dmat)[:, vfree]
    return res, jac.tocsr()
