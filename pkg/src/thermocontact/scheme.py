"""Time-retarded staggered scheme for the coupled thermistor contact problem.

Each implicit Euler step solves, in order: the temperature balance with
every coupling coefficient and source frozen at the delayed state, the
electric balance at the just-computed temperature, and the momentum balance
with the delayed temperature. The delay makes each stage well posed on its
own: within a step no stage reads a quantity computed later in the same
step, and the delayed lookups on [0, delay] return the initial state.

The temperature equation carries the quartic gradient regularizer weighted
by the delay length itself (overridable for experiments); its contribution
must vanish as the delay is refined, which the cascade report measures.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import spsolve

from .assembly import (
    assemble_elastic_operators,
    assemble_electric_system,
    assemble_frictional_heat,
    assemble_joule_load_direct,
    assemble_joule_load_reformulated,
    assemble_p_laplacian,
    assemble_scalar_mass,
    assemble_thermal_robin,
    assemble_thermal_stiffness,
    assemble_velocity_heat,
    scalar_stiffness_unit_full,
    u_norm4,
)
from .friction import (
    MomentumOperators,
    RegularizedFriction,
    SolverError,
    build_momentum_operators,
    contact_traction_full,
    solve_momentum_step,
)
from .materials import BoundaryData, FrictionModel, MaterialModel
from .mesh import DofMap, Mesh

JOULE_MODES = ("direct", "reformulated")


class ConfigError(ValueError):
    """A configuration value violates a scheme invariant."""


@dataclass
class Models:
    """Geometry and physics bundle consumed by every stage."""

    mesh: Mesh
    dofs: DofMap
    mat: MaterialModel
    fric: FrictionModel
    bd: BoundaryData


@dataclass
class SolverConfig:
    """Time grid, regularization, and solver control for one run."""

    T: float
    h: float
    dt: float
    eps: float = 1e-6
    tol_temperature: float = 1e-10
    max_iter_temperature: int = 50
    tol_momentum: float = 1e-10
    max_iter_momentum: int = 50
    joule_mode: str = "direct"
    regularizer_coefficient: float | None = None
    cascade_levels: tuple[float, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if not (0.0 < self.dt <= self.h < self.T):
            raise ConfigError(
                f"time grid must satisfy 0 < dt <= h < T, got dt={self.dt}, h={self.h}, T={self.T}")
        k = round(self.h / self.dt)
        if k < 1 or abs(k * self.dt - self.h) > 1e-9 * self.h:
            raise ConfigError(f"delay h={self.h} is not an integer multiple of dt={self.dt}")
        if not self.eps > 0.0:
            raise ConfigError("friction regularization eps must be positive")
        for name in ("tol_temperature", "tol_momentum"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        for name in ("max_iter_temperature", "max_iter_momentum"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.joule_mode not in JOULE_MODES:
            raise ConfigError(f"joule_mode must be one of {JOULE_MODES}, got {self.joule_mode!r}")
        if self.regularizer_coefficient is not None and self.regularizer_coefficient < 0.0:
            raise ConfigError("regularizer_coefficient must be nonnegative")

    @property
    def delay_steps(self) -> int:
        return round(self.h / self.dt)

    @property
    def n_steps(self) -> int:
        return int(np.floor(self.T / self.dt + 1e-9))

    @property
    def regularizer(self) -> float:
        return self.h if self.regularizer_coefficient is None else self.regularizer_coefficient


@dataclass
class SystemState:
    """Full nodal fields at one grid time; Dirichlet entries stay zero."""

    t: float
    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    phi: np.ndarray  # shifted potential: total minus the ambient interpolant
    xi: np.ndarray


@dataclass
class DelayBuffer:
    """Grid-time state history with exact two-branch delayed lookup."""

    h: float
    dt: float
    states: list[SystemState] = field(default_factory=list)

    @property
    def k(self) -> int:
        return round(self.h / self.dt)

    def push(self, state: SystemState) -> None:
        self.states.append(state)

    def delayed(self, t: float) -> SystemState:
        """State at max(t - h, 0); t must be a reached grid time."""
        i = round(t / self.dt)
        if abs(i * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a grid time for dt={self.dt}")
        if i >= len(self.states):
            raise ValueError(f"t={t} beyond stored history (have {len(self.states)} states)")
        return self.states[max(i - self.k, 0)]


@dataclass
class SchemeOperators:
    """Matrices that are constant along the run."""

    mass_thermal: object
    robin_thermal: object
    momentum: MomentumOperators
    rfric: RegularizedFriction


@dataclass
class Workspace:
    models: Models
    config: SolverConfig
    buffer: DelayBuffer
    ops: SchemeOperators


def delay_inequality_gap(history: np.ndarray, h: float, dt: float) -> float:
    """Slack of the delayed-history norm bound; nonpositive up to roundoff.

    For samples g_0..g_n at spacing dt and delay h = k dt, the delayed
    sequence satisfies sum dt |g_delayed(t_i)|^2 <= h |g_0|^2 + sum dt |g_i|^2,
    because the delayed sum repeats g_0 exactly k+1 times and drops the k
    final samples. Returns lhs - rhs.
    """
    values = np.atleast_2d(np.asarray(history, dtype=float))
    if values.shape[0] < 1:
        raise ValueError("history must hold at least the initial sample")
    k = round(h / dt)
    if k < 1 or abs(k * dt - h) > 1e-9 * h:
        raise ValueError("delay must be an integer multiple of dt")
    sq = np.einsum("nm,nm->n", values, values)
    n = values.shape[0] - 1
    delayed_idx = np.maximum(np.arange(n + 1) - k, 0)
    lhs = dt * float(sq[delayed_idx].sum())
    rhs = h * float(sq[0]) + dt * float(sq.sum())
    return lhs - rhs


def _check_initial_field(name: str, values: np.ndarray, size: int, zero_idx: np.ndarray) -> np.ndarray:
    out = np.zeros(size) if values is None else np.asarray(values, dtype=float).copy()
    if out.shape != (size,):
        raise ConfigError(f"{name} must have shape ({size},), got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"{name} contains non-finite entries")
    if zero_idx.size and np.abs(out[zero_idx]).max() > 0.0:
        raise ConfigError(f"{name} must vanish at constrained nodes")
    return out


def initialize(models: Models, config: SolverConfig,
               u0: np.ndarray | None = None, v0: np.ndarray | None = None,
               theta0: np.ndarray | None = None) -> Workspace:
    """Validate the setup, solve for the initial potential, seed the buffer."""
    config.validate()
    mesh, dofs = models.mesh, models.dofs
    n = mesh.n_nodes
    dir_scalar = dofs.dirichlet_nodes
    dir_vector = np.concatenate([2 * dir_scalar, 2 * dir_scalar + 1]) if dir_scalar.size else dir_scalar
    theta0 = _check_initial_field("theta0", theta0, n, dir_scalar)
    u0 = _check_initial_field("u0", u0, 2 * n, dir_vector)
    v0 = _check_initial_field("v0", v0, 2 * n, dir_vector)

    rfric = RegularizedFriction(models.fric, config.eps)
    ops = SchemeOperators(
        mass_thermal=assemble_scalar_mass(mesh, dofs).matrix,
        robin_thermal=assemble_thermal_robin(mesh, dofs, models.bd, models.fric, t=0.0).matrix,
        momentum=build_momentum_operators(mesh, dofs, models.mat),
        rfric=rfric,
    )

    phi0 = _solve_electric(models, theta0, models.fric, t=0.0)
    xi0 = contact_traction_full(mesh, dofs, rfric, v0, t=0.0)
    state0 = SystemState(t=0.0, u=u0, v=v0, theta=theta0, phi=phi0, xi=xi0)
    buffer = DelayBuffer(h=config.h, dt=config.dt, states=[state0])
    return Workspace(models=models, config=config, buffer=buffer, ops=ops)


def _solve_electric(models: Models, theta_full: np.ndarray, fric: FrictionModel, t: float) -> np.ndarray:
    mesh, dofs = models.mesh, models.dofs
    op = assemble_electric_system(mesh, dofs, models.mat, models.bd, theta_full, fric, t)
    phi_free = spsolve(op.matrix, op.load)
    res = float(np.linalg.norm(op.matrix @ phi_free - op.load))
    if not np.all(np.isfinite(phi_free)) or res > 1e-12 * (1.0 + float(np.linalg.norm(op.load))):
        raise SolverError(f"electric solve at t={t:.6g}: residual {res:.3e} (matrix near-singular?)")
    out = np.zeros(mesh.n_nodes)
    out[dofs.scalar_free_nodes] = phi_free
    return out


def solve_electric(ws: Workspace, theta_full: np.ndarray, t: float) -> np.ndarray:
    """Potential for a given temperature field: one SPD sparse solve."""
    return _solve_electric(ws.models, theta_full, ws.models.fric, t)


def _robin_matrix(ws: Workspace, t: float):
    if ws.models.fric.time_dependent:
        return assemble_thermal_robin(ws.models.mesh, ws.models.dofs, ws.models.bd,
                                      ws.models.fric, t).matrix
    return ws.ops.robin_thermal


def solve_temperature_step(ws: Workspace, old: SystemState, delayed: SystemState,
                           t_new: float) -> np.ndarray:
    """Implicit Euler temperature update with delayed couplings.

    The conductivity is frozen at the delayed temperature, the Joule, strain
    and friction heat sources are evaluated from the delayed state, and the
    only nonlinearity left is the quartic gradient regularizer, handled by
    damped Newton with its exact Jacobian.
    """
    models, cfg = ws.models, ws.config
    mesh, dofs, mat = models.mesh, models.dofs, models.mat
    free = dofs.scalar_free_nodes
    dt = cfg.dt

    stiff = assemble_thermal_stiffness(mesh, dofs, mat, delayed.theta).matrix
    robin = _robin_matrix(ws, t_new)
    if cfg.joule_mode == "direct":
        joule = assemble_joule_load_direct(mesh, dofs, mat, models.bd, delayed.theta, delayed.phi)
    else:
        joule = assemble_joule_load_reformulated(mesh, dofs, mat, models.bd,
                                                 delayed.theta, delayed.phi, models.fric, t_new)
    sources = (joule
               + assemble_velocity_heat(mesh, dofs, mat, delayed.v)
               + assemble_frictional_heat(mesh, dofs, models.fric, delayed.v, t_new))

    rho_cp = mat.mass_thermal()
    base = ((rho_cp / dt) * ws.ops.mass_thermal + stiff + robin).tocsr()
    rhs = sources + (rho_cp / dt) * (ws.ops.mass_thermal @ old.theta[free])
    c_reg = cfg.regularizer
    target = cfg.tol_temperature * (1.0 + float(np.linalg.norm(rhs)))

    def residual(theta_free):
        full = np.zeros(mesh.n_nodes)
        full[free] = theta_free
        pl_res, pl_jac = assemble_p_laplacian(mesh, dofs, full)
        return base @ theta_free + c_reg * pl_res - rhs, pl_jac

    theta = old.theta[free].copy()
    res, pl_jac = residual(theta)
    res_norm = float(np.linalg.norm(res))
    iterations = 0
    while res_norm > target:
        if iterations >= cfg.max_iter_temperature:
            raise SolverError(
                f"temperature step at t={t_new:.6g} stalled after {iterations} iterations; "
                f"residual {res_norm:.3e} > {target:.3e}")
        jac = base + c_reg * pl_jac
        delta = spsolve(jac.tocsr(), -res)
        alpha = 1.0
        for _ in range(20):
            trial = theta + alpha * delta
            res_t, pl_jac_t = residual(trial)
            norm_t = float(np.linalg.norm(res_t))
            if norm_t < res_norm:
                break
            alpha *= 0.5
        else:
            raise SolverError(
                f"temperature line search at t={t_new:.6g} found no descent; "
                f"residual {res_norm:.3e}")
        theta, res, pl_jac, res_norm = trial, res_t, pl_jac_t, norm_t
        iterations += 1

    out = np.zeros(mesh.n_nodes)
    out[free] = theta
    return out


def _momentum_stage(ws: Workspace, old: SystemState, delayed: SystemState, t_new: float):
    models, cfg = ws.models, ws.config
    dofs = models.dofs
    vfree = dofs.vector_free_dofs()
    v_new, u_new, xi, _ = solve_momentum_step(
        models.mesh, dofs, models.mat, ws.ops.rfric, ws.ops.momentum, models.bd,
        cfg.dt, t_new, old.u[vfree], old.v[vfree], delayed.theta,
        max_iter=cfg.max_iter_momentum, rtol=cfg.tol_momentum)
    u_full = np.zeros(2 * models.mesh.n_nodes)
    v_full = np.zeros_like(u_full)
    u_full[vfree] = u_new
    v_full[vfree] = v_new
    return v_full, u_full, xi


def advance_one(ws: Workspace, pre_momentum_hook=None) -> SystemState:
    """One grid step: temperature, then potential, then velocity.

    pre_momentum_hook, if given, is called with (theta_new, phi_new) after
    the scalar solves and before the momentum solve; instrumentation tests
    use it to poison the current-time temperature and verify the momentum
    stage reads temperature only through the delay.
    """
    buf = ws.buffer
    n_new = len(buf.states)
    t_new = n_new * ws.config.dt
    old = buf.states[-1]
    delayed = buf.states[max(n_new - buf.k, 0)]

    theta_new = solve_temperature_step(ws, old, delayed, t_new)
    phi_new = solve_electric(ws, theta_new, t_new)
    if pre_momentum_hook is not None:
        pre_momentum_hook(theta_new, phi_new)
    v_new, u_new, xi_new = _momentum_stage(ws, old, delayed, t_new)

    state = SystemState(t=t_new, u=u_new, v=v_new, theta=theta_new, phi=phi_new, xi=xi_new)
    buf.push(state)
    return state


def advance(ws: Workspace) -> list[SystemState]:
    """Run the staggered loop to the horizon; returns the full trajectory."""
    while len(ws.buffer.states) - 1 < ws.config.n_steps:
        advance_one(ws)
    return ws.buffer.states


@dataclass
class CascadeReport:
    """Cauchy differences between consecutive delay levels on a fixed grid."""

    levels: list[float]
    theta_cauchy: list[float]
    phi_cauchy: list[float]
    v_cauchy: list[float]
    regularizer: list[float]


def run_cascade(models: Models, config: SolverConfig) -> CascadeReport:
    """Solve once per delay level and measure inter-level differences.

    Levels share T and dt, so trajectories live on one grid and differences
    are exact. Temperature differences are measured in the time-integrated
    mass norm, potential differences in the gradient norm, velocities in the
    elasticity energy norm (left-rectangle time quadrature). Each level
    also reports the dual-norm size of its regularizer contribution,
    h (sum dt |theta|_U^4)^(3/4), which must shrink as the delay is refined.
    """
    levels = list(config.cascade_levels)
    if not levels:
        raise ConfigError("cascade requires at least one level")
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("cascade levels must be strictly decreasing")
    for lev in levels:
        k = round(lev / config.dt)
        if k < 1 or abs(k * config.dt - lev) > 1e-9 * lev:
            raise ConfigError(f"cascade level {lev} is not an integer multiple of dt={config.dt}")

    mesh, dofs = models.mesh, models.dofs
    free = dofs.scalar_free_nodes
    vfree = dofs.vector_free_dofs()
    mass = assemble_scalar_mass(mesh, dofs).matrix
    stiff = dofs.restrict_scalar(scalar_stiffness_unit_full(mesh))
    vstiff = assemble_elastic_operators(mesh, dofs, models.mat)[1].matrix
    dt = config.dt

    trajectories = []
    regularizer = []
    for lev in levels:
        cfg = dataclasses.replace(config, h=lev, cascade_levels=())
        ws = initialize(models, cfg)
        states = advance(ws)
        theta = np.stack([s.theta[free] for s in states])
        phi = np.stack([s.phi[free] for s in states])
        vel = np.stack([s.v[vfree] for s in states])
        trajectories.append((theta, phi, vel))
        quartic = sum(dt * u_norm4(mesh, s.theta) for s in states[:-1])
        regularizer.append(lev * quartic ** 0.75)

    def cauchy(a, b, matrix):
        diff = a - b
        total = sum(dt * float(d @ (matrix @ d)) for d in diff[:-1])
        return float(np.sqrt(total))

    theta_cauchy, phi_cauchy, v_cauchy = [], [], []
    for (ta, pa, va), (tb, pb, vb) in zip(trajectories, trajectories[1:]):
        theta_cauchy.append(cauchy(ta, tb, mass))
        phi_cauchy.append(cauchy(pa, pb, stiff))
        v_cauchy.append(cauchy(va, vb, vstiff))

    return CascadeReport(levels=levels, theta_cauchy=theta_cauchy,
                         phi_cauchy=phi_cauchy, v_cauchy=v_cauchy,
                         regularizer=regularizer)
