"""Material, friction, and boundary-data models plus the assumption validator.

The solver's well-posedness rests on a short list of structural assumptions:

A2  electric conductivity sigma_el bounded between sigma_star > 0 and
    M_sigma, Lipschitz;
A3  thermal conductivity matrix k(s) elliptic with constant delta, bounded,
    Lipschitz;
A4  viscosity/elasticity tensors a, b with the usual symmetries and
    ellipticity delta on symmetric matrices;
A5  normal contact traction F >= 0;
A6  positive exchange coefficients h_N, H_N; bounded nonnegative h_C, H_C;
A7  friction coefficient mu in [0, mu_bar] with the one-sided slope bound
    (mu(s1)-mu(s2))(s1-s2) >= -d_mu (s1-s2)^2;
A8  smallness: delta > F_bar * d_mu * ||trace||^2, with the discrete
    tangential trace norm standing in for the continuous one.

Models are user-pluggable callables, so the validator works by seeded
Monte-Carlo sampling rather than symbolic proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit


@dataclass
class MaterialModel:
    """Bulk constitutive data. Tensors are constant over the domain."""

    rho: float
    c_p: float
    theta_ref: float
    a_tensor: np.ndarray  # (2, 2, 2, 2) viscosity
    b_tensor: np.ndarray  # (2, 2, 2, 2) elasticity
    m_tensor: np.ndarray  # (2, 2) thermal expansion coupling
    k: Callable[[float], np.ndarray]  # s -> (2, 2) conductivity
    sigma_el: Callable[[np.ndarray], np.ndarray]  # s -> conductivity, vectorized
    sigma_star: float
    M_sigma: float
    delta: float
    sigma_lipschitz: float
    k_lipschitz: float  # Frobenius-norm Lipschitz constant, user-declared
    k_upper: float  # user-declared upper ellipticity bound for k

    def mass_thermal(self) -> float:
        return self.rho * self.c_p

    def mass_mech(self) -> float:
        return self.rho


@dataclass
class FrictionModel:
    """Slip-rate dependent friction coefficient and prescribed normal traction."""

    mu: Callable[[np.ndarray], np.ndarray]  # slip rate >= 0 -> coefficient
    mu_bar: float
    d_mu: float
    F_field: Callable[[np.ndarray, float], np.ndarray]  # (points, t) -> traction
    F_bar: float
    mu_prime: Callable[[np.ndarray], np.ndarray] | None = None
    mu_antiderivative: Callable[[np.ndarray], np.ndarray] | None = None
    time_dependent: bool = False


@dataclass
class BoundaryData:
    """Exchange coefficients, ambient potential extension, and loads."""

    h_N: float
    H_N: float
    h_C: Callable[[np.ndarray], np.ndarray]  # of the traction value F
    H_C: Callable[[np.ndarray], np.ndarray]
    H_C_bar: float
    phi_b: Callable[[np.ndarray], np.ndarray]  # (points, 2) -> values
    f_0: Callable[[np.ndarray, float], np.ndarray]  # body force (points, t) -> (points, 2)
    f_2: Callable[[np.ndarray, float], np.ndarray]  # surface traction on the N part


@dataclass
class AssumptionCheck:
    id: str
    description: str
    passed: bool
    margin: float
    witness: dict | None = None


@dataclass
class ValidationReport:
    checks: list[AssumptionCheck] = field(default_factory=list)

    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            line = f"{c.id} {c.description}: {status} (margin={c.margin:.6g})"
            if c.witness is not None:
                line += f" witness={c.witness}"
            out.append(line)
        return out


def isotropic_tensor(lam: float, mu_shear: float) -> np.ndarray:
    """a_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk)."""
    eye = np.eye(2)
    t = np.zeros((2, 2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    t[i, j, k, l] = lam * eye[i, j] * eye[k, l] + mu_shear * (
                        eye[i, k] * eye[j, l] + eye[i, l] * eye[j, k]
                    )
    return t


DEFAULTS = {
    "sigma_star": 0.1,
    "M_sigma": 1.0,
    "kappa": 2.0,
    "s_c": 1.0,
    "k_amp": 0.1,
    "delta": 1.0,
    "rho": 1.0,
    "c_p": 1.0,
    "theta_ref": 1.0,
    "m_coef": 0.05,
    "lam_a": 0.0,
    "mu_a": 0.5,
    "lam_b": 0.2,
    "mu_b": 0.5,
    "mu_s": 0.4,
    "mu_d": 0.2,
    "beta": 1.0,
    "F_value": 0.1,
    "h_N": 1.0,
    "H_N": 1.0,
    "f0": (0.0, 0.0),
    "f2": (0.0, 0.0),
    "phi_b": "x1",
}

PHI_B_FORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "x1": lambda x: np.asarray(x)[..., 0],
    "x2": lambda x: np.asarray(x)[..., 1],
    "x1x2": lambda x: np.asarray(x)[..., 0] * np.asarray(x)[..., 1],
    "zero": lambda x: np.zeros(np.asarray(x).shape[:-1]),
}


def default_ptc_model(overrides: dict | None = None):
    """Reference thermistor scenario with a falling conductivity curve.

    sigma_el(s) = sigma_star + (M_sigma - sigma_star) * logistic(-kappa (s - s_c))
    k(s)        = (1 + k_amp * s^2 / (1 + s^2)) * I
    mu(s)       = mu_d + (mu_s - mu_d) * exp(-beta s)

    The conductivity decreases with temperature, the friction coefficient
    weakens with slip rate, and every assumption A2-A8 holds by construction
    (the declared Lipschitz constants are derived from the closed forms).

    Returns (MaterialModel, FrictionModel, BoundaryData).
    """
    p = dict(DEFAULTS)
    if overrides:
        unknown = set(overrides) - set(p)
        if unknown:
            raise ValueError(f"unknown model parameters: {sorted(unknown)}")
        p.update(overrides)

    sigma_star = float(p["sigma_star"])
    m_sigma = float(p["M_sigma"])
    kappa = float(p["kappa"])
    s_c = float(p["s_c"])
    k_amp = float(p["k_amp"])

    def sigma_el(s):
        return sigma_star + (m_sigma - sigma_star) * expit(-kappa * (np.asarray(s, dtype=float) - s_c))

    def k(s):
        s = float(s)
        return (1.0 + k_amp * s * s / (1.0 + s * s)) * np.eye(2)

    # max |d/ds logistic| = kappa/4; max |d/ds s^2/(1+s^2)| = 9/(8 sqrt(3))
    sigma_lip = abs(m_sigma - sigma_star) * kappa / 4.0
    k_lip = k_amp * 9.0 / (8.0 * np.sqrt(3.0)) * np.sqrt(2.0)  # Frobenius of diag pair

    mat = MaterialModel(
        rho=float(p["rho"]),
        c_p=float(p["c_p"]),
        theta_ref=float(p["theta_ref"]),
        a_tensor=isotropic_tensor(float(p["lam_a"]), float(p["mu_a"])),
        b_tensor=isotropic_tensor(float(p["lam_b"]), float(p["mu_b"])),
        m_tensor=float(p["m_coef"]) * np.eye(2),
        k=k,
        sigma_el=sigma_el,
        sigma_star=sigma_star,
        M_sigma=m_sigma,
        delta=float(p["delta"]),
        sigma_lipschitz=sigma_lip,
        k_lipschitz=k_lip,
        k_upper=1.0 + k_amp,
    )

    mu_s = float(p["mu_s"])
    mu_d = float(p["mu_d"])
    beta = float(p["beta"])
    f_const = float(p["F_value"])

    def mu(s):
        return mu_d + (mu_s - mu_d) * np.exp(-beta * np.asarray(s, dtype=float))

    def mu_prime(s):
        return -beta * (mu_s - mu_d) * np.exp(-beta * np.asarray(s, dtype=float))

    def mu_anti(r):
        r = np.asarray(r, dtype=float)
        return mu_d * r + (mu_s - mu_d) * (1.0 - np.exp(-beta * r)) / beta

    def f_field(x, t):
        return np.full(np.asarray(x).shape[:-1], f_const)

    fric = FrictionModel(
        mu=mu,
        mu_bar=max(mu_s, mu_d),
        d_mu=beta * abs(mu_s - mu_d),
        F_field=f_field,
        F_bar=f_const,
        mu_prime=mu_prime,
        mu_antiderivative=mu_anti,
        time_dependent=False,
    )

    f0 = np.asarray(p["f0"], dtype=float)
    f2 = np.asarray(p["f2"], dtype=float)
    phi_b_name = str(p["phi_b"])
    if phi_b_name not in PHI_B_FORMS:
        raise ValueError(f"unknown phi_b form {phi_b_name!r}; options: {sorted(PHI_B_FORMS)}")

    bd = BoundaryData(
        h_N=float(p["h_N"]),
        H_N=float(p["H_N"]),
        h_C=lambda F: 1.0 / (1.0 + np.asarray(F, dtype=float)),
        H_C=lambda F: 1.0 / (1.0 + np.asarray(F, dtype=float)),
        H_C_bar=1.0,
        phi_b=PHI_B_FORMS[phi_b_name],
        f_0=lambda x, t: np.broadcast_to(f0, np.asarray(x).shape).copy(),
        f_2=lambda x, t: np.broadcast_to(f2, np.asarray(x).shape).copy(),
    )
    return mat, fric, bd


def _sample_s(rng: np.random.Generator, n: int) -> np.ndarray:
    """Temperature samples: wide uniform sweep plus a cluster near the origin."""
    wide = rng.uniform(-1e6, 1e6, size=n // 2)
    near = 10.0 * rng.standard_normal(n - n // 2)
    return np.concatenate([wide, near])


def validate_assumptions(
    mat: MaterialModel,
    fric: FrictionModel,
    bd: BoundaryData,
    trace_norm: float,
    seed: int = 0,
    n_samples: int = 10_000,
) -> ValidationReport:
    """Seeded Monte-Carlo check of assumptions A2-A8.

    Failures are report entries carrying the witnessing sample, never
    exceptions. A8 is evaluated with the supplied discrete trace norm
    (a surrogate for the continuous operator norm).
    """
    rng = np.random.default_rng(seed)
    rep = ValidationReport()
    tol = 1e-12

    # A2: bounds and Lipschitz continuity of sigma_el
    s = _sample_s(rng, n_samples)
    vals = np.asarray(mat.sigma_el(s), dtype=float)
    lo = float(vals.min() - mat.sigma_star)
    hi = float(mat.M_sigma - vals.max())
    margin = min(lo, hi)
    witness = None
    if margin < -tol * max(1.0, mat.M_sigma):
        bad = int(np.argmin(np.minimum(vals - mat.sigma_star, mat.M_sigma - vals)))
        witness = {"s": float(s[bad]), "sigma_el": float(vals[bad])}
    rep.checks.append(AssumptionCheck(
        "A2", "sigma_el within [sigma_star, M_sigma]",
        witness is None, margin, witness))

    s2 = s + rng.uniform(-1.0, 1.0, size=s.shape)
    quot = np.abs(np.asarray(mat.sigma_el(s)) - np.asarray(mat.sigma_el(s2))) / np.abs(s - s2)
    worst = float(np.nanmax(quot))
    ok = worst <= mat.sigma_lipschitz * 1.01
    witness = None if ok else {"s1": float(s[np.nanargmax(quot)]), "s2": float(s2[np.nanargmax(quot)]), "quotient": worst}
    rep.checks.append(AssumptionCheck(
        "A2L", "sigma_el difference quotients within declared Lipschitz constant",
        ok, mat.sigma_lipschitz * 1.01 - worst, witness))

    # A3: ellipticity, boundedness, Lipschitz continuity of k
    n_k = max(n_samples // 10, 100)
    s_k = _sample_s(rng, n_k)
    xi = rng.standard_normal((n_k, 2))
    margin3 = np.inf
    margin3u = np.inf
    witness = None
    witness_u = None
    for sv, x in zip(s_k, xi):
        km = np.asarray(mat.k(sv), dtype=float)
        q = float(x @ km @ x)
        nrm = float(x @ x)
        m_lo = q - mat.delta * nrm
        m_hi = mat.k_upper * nrm - q
        if m_lo < margin3:
            margin3 = m_lo
            if m_lo < -tol * nrm:
                witness = {"s": float(sv), "xi": x.tolist(), "form": q}
        if m_hi < margin3u:
            margin3u = m_hi
            if m_hi < -tol * nrm:
                witness_u = {"s": float(sv), "xi": x.tolist(), "form": q}
    rep.checks.append(AssumptionCheck(
        "A3", "k ellipticity >= delta", witness is None, float(margin3), witness))
    rep.checks.append(AssumptionCheck(
        "A3U", "k bounded by declared upper constant", witness_u is None, float(margin3u), witness_u))

    s_k2 = s_k + rng.uniform(-1.0, 1.0, size=s_k.shape)
    worst_k = 0.0
    for s1v, s2v in zip(s_k, s_k2):
        d = np.linalg.norm(np.asarray(mat.k(s1v)) - np.asarray(mat.k(s2v))) / abs(s1v - s2v)
        worst_k = max(worst_k, float(d))
    ok = worst_k <= mat.k_lipschitz * 1.01
    rep.checks.append(AssumptionCheck(
        "A3L", "k difference quotients within declared Lipschitz constant",
        ok, mat.k_lipschitz * 1.01 - worst_k, None if ok else {"quotient": worst_k}))

    # A4: tensor symmetries and ellipticity on symmetric matrices
    sym_ok = True
    for t in (mat.a_tensor, mat.b_tensor):
        sym_ok = sym_ok and np.allclose(t, t.transpose(1, 0, 2, 3), atol=1e-14)
        sym_ok = sym_ok and np.allclose(t, t.transpose(2, 3, 0, 1), atol=1e-14)
    margin4 = np.inf
    witness = None
    xi_raw = rng.standard_normal((n_samples, 2, 2))
    xi_sym = 0.5 * (xi_raw + xi_raw.transpose(0, 2, 1))
    for t in (mat.a_tensor, mat.b_tensor):
        forms = np.einsum("ijkl,nij,nkl->n", t, xi_sym, xi_sym)
        norms = np.einsum("nij,nij->n", xi_sym, xi_sym)
        m = forms - mat.delta * norms
        i = int(np.argmin(m))
        margin4 = min(margin4, float(m[i]))
        if m[i] < -tol * norms[i]:
            witness = {"xi": xi_sym[i].tolist(), "form": float(forms[i])}
    rep.checks.append(AssumptionCheck(
        "A4", "a, b symmetric and elliptic on symmetric matrices",
        sym_ok and witness is None, float(margin4) if sym_ok else -np.inf, witness))

    # A5: nonnegative prescribed normal traction
    pts = rng.uniform(0.0, 1.0, size=(n_samples, 2))
    times = rng.uniform(0.0, 10.0, size=n_samples)
    worst5 = np.inf
    witness = None
    for t_chunk in range(0, n_samples, 1000):
        sl = slice(t_chunk, t_chunk + 1000)
        for x, tv in zip(pts[sl], times[sl]):
            fval = float(np.asarray(fric.F_field(x[None, :], tv)).ravel()[0])
            if fval < worst5:
                worst5 = fval
                if fval < -tol:
                    witness = {"x": x.tolist(), "t": float(tv), "F": fval}
    rep.checks.append(AssumptionCheck("A5", "normal traction F >= 0", witness is None, float(worst5), witness))

    # A6: exchange coefficients
    ok6 = bd.h_N > 0 and bd.H_N > 0
    f_samples = np.abs(rng.uniform(0.0, max(fric.F_bar, 1.0), size=n_samples))
    hc = np.asarray(bd.h_C(f_samples), dtype=float)
    hcc = np.asarray(bd.H_C(f_samples), dtype=float)
    bounded = bool(np.all(np.isfinite(hc)) and np.all(np.isfinite(hcc))
                   and hc.min() >= -tol and hcc.min() >= -tol
                   and hcc.max() <= bd.H_C_bar * (1.0 + 1e-12))
    margin6 = min(bd.h_N, bd.H_N, float(hc.min()), float(hcc.min()),
                  float(bd.H_C_bar - hcc.max()))
    witness = None if (ok6 and bounded) else {
        "h_N": bd.h_N, "H_N": bd.H_N,
        "h_C_min": float(hc.min()), "H_C_max": float(hcc.max())}
    rep.checks.append(AssumptionCheck(
        "A6", "h_N, H_N > 0; h_C, H_C bounded nonnegative", ok6 and bounded, margin6, witness))

    # A7: friction coefficient bounds and one-sided slope condition
    s_mu = np.abs(rng.uniform(0.0, 100.0, size=n_samples))
    mv = np.asarray(fric.mu(s_mu), dtype=float)
    in_range = float(min(mv.min(), fric.mu_bar - mv.max()))
    witness = None
    if in_range < -tol:
        bad = int(np.argmin(np.minimum(mv, fric.mu_bar - mv)))
        witness = {"s": float(s_mu[bad]), "mu": float(mv[bad])}
    rep.checks.append(AssumptionCheck(
        "A7", "mu within [0, mu_bar]", witness is None, in_range, witness))

    s1 = np.abs(rng.uniform(0.0, 10.0, size=n_samples))
    s2v = np.abs(s1 + rng.uniform(-2.0, 2.0, size=n_samples))
    m1 = np.asarray(fric.mu(s1), dtype=float)
    m2 = np.asarray(fric.mu(s2v), dtype=float)
    lhs = (m1 - m2) * (s1 - s2v)
    rhs = -fric.d_mu * (s1 - s2v) ** 2
    slack = lhs - rhs
    i = int(np.argmin(slack))
    ok7c = slack[i] >= -1e-12 * max(1.0, fric.d_mu)
    witness = None if ok7c else {"s1": float(s1[i]), "s2": float(s2v[i]), "slack": float(slack[i])}
    rep.checks.append(AssumptionCheck(
        "A7c", "one-sided slope bound on mu", ok7c, float(slack[i]), witness))

    # A8: smallness condition with the discrete trace norm
    margin8 = mat.delta - fric.F_bar * fric.d_mu * trace_norm**2
    rep.checks.append(AssumptionCheck(
        "A8", "delta > F_bar * d_mu * trace_norm^2 (discrete trace norm)",
        margin8 > 0, float(margin8),
        None if margin8 > 0 else {
            "delta": mat.delta, "F_bar": fric.F_bar,
            "d_mu": fric.d_mu, "trace_norm": trace_norm}))

    return rep
