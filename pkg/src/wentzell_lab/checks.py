"""Executable verification machinery for the coupled boundary-value operator.

Each harness turns an analytic statement into a measurement: nodal unit-ball
projection and its form inequality, resolvent invariance of convex sets,
sup-norm resolvent bounds (m-dissipativity), the Stampacchia stopping
threshold with its certified decay sequence, level-set sup-norm
certification, trace-constant estimation, a constructive density witness,
and the interior-Laplacian submarkovian checks. Randomized reports record
the seed, a mesh id and the boundary-coefficient description so every run
is reproducible.
"""

import json
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .assembly import (ProductState, assemble, discrete_normal_derivative,
                       nodal_boundary_values, nodal_interior_values,
                       shifted_form_matrix)
from .linalg import lu_factor
from .mesh import quality_report
from .semigroup import WentzellOperator, build_load, choose_omega0, robin_solve

__all__ = [
    "truncate",
    "project_unit_ball",
    "unit_ball_projection",
    "positive_part_projection",
    "ProjectionReport",
    "check_projection_inequality",
    "InvarianceReport",
    "invariance_harness",
    "SupBoundReport",
    "sup_resolvent_bound",
    "StampacchiaInput",
    "StampacchiaResult",
    "stampacchia_threshold",
    "simulate_stampacchia_recursion",
    "LevelSetProfile",
    "build_level_set_profile",
    "coercivity_constant",
    "CertificateReport",
    "linfty_certify",
    "TraceConstantReport",
    "trace_constant_estimate",
    "WitnessTarget",
    "WitnessReport",
    "density_witness",
    "wentzell_domain_defect",
    "NeumannReport",
    "neumann_checks",
]


def _mesh_id(mesh):
    return f"{mesh.n_vertices}v{mesh.n_triangles}t"


def _values(u):
    return u.values if isinstance(u, ProductState) else np.asarray(u)


class _Report:
    """Structured text / JSON emission shared by all report types."""

    def summary(self):
        raise NotImplementedError

    def text(self):
        return "\n".join(f"{k}: {v}" for k, v in self.summary().items())

    def to_json(self):
        return json.dumps(self.summary(), default=str, sort_keys=True)


# ---------------------------------------------------------------------------
# nodal projections
# ---------------------------------------------------------------------------

def truncate(values, level):
    """Radial truncation (|z| ^ level) sign z, with sign 0 = 0.

    Applied nodally to P1 coefficients this is the natural discrete
    truncation operator; it keeps the function in the discrete space.
    """
    if level < 0:
        raise ValueError("truncation level must be nonnegative")
    z = np.asarray(values, dtype=complex)
    a = np.abs(z)
    scale = np.ones_like(a)
    over = a > level
    scale[over] = level / a[over]
    out = z * scale
    return out if out.shape else complex(out)


def project_unit_ball(values):
    """Projection onto the closed unit ball taken pointwise/nodally."""
    return truncate(values, 1.0)


def unit_ball_projection(values):
    return truncate(values, 1.0)


def positive_part_projection(values):
    """Projection onto the real positive cone: z -> max(Re z, 0)."""
    z = np.asarray(values, dtype=complex)
    return np.maximum(z.real, 0.0).astype(complex)


@dataclass
class ProjectionReport(_Report):
    """Signs of the projection pairing against the stiffness and shifted form."""

    stiffness_value: float     # Re (u - w)* K w
    shifted_value: float       # Re (u - w)* S_omega0 w
    omega0: float
    scale: float
    mesh_id: str

    def nonnegative(self, tol=0.0):
        return (self.stiffness_value >= -tol * self.scale
                and self.shifted_value >= -tol * self.scale)

    def summary(self):
        return {
            "stiffness_value": self.stiffness_value,
            "shifted_value": self.shifted_value,
            "omega0": self.omega0,
            "scale": self.scale,
            "mesh_id": self.mesh_id,
        }


def check_projection_inequality(bundle, u, omega0=None):
    """Evaluate the unit-ball projection inequality on a nodal vector.

    Computes w = nodal projection of u onto the unit ball and reports
    Re form(w, u - w) for the raw stiffness and for the omega0-shifted form.
    Negative values are findings, not errors: on a non-obtuse mesh with
    lumped masses the stiffness is an M-matrix and both values stay
    nonnegative up to roundoff.
    """
    if omega0 is None:
        omega0 = choose_omega0(bundle.beta)
    uv = _values(u)
    w = project_unit_ball(uv)
    d = uv - w
    K = bundle.K.astype(complex)
    S = shifted_form_matrix(bundle, omega0)
    scale = float(max(S.max_abs() * np.vdot(uv, uv).real, 1e-300))
    return ProjectionReport(
        stiffness_value=float(np.vdot(d, K @ w).real),
        shifted_value=float(np.vdot(d, S @ w).real),
        omega0=float(omega0),
        scale=scale,
        mesh_id=_mesh_id(bundle.mesh),
    )


# ---------------------------------------------------------------------------
# invariance of convex sets under the resolvent
# ---------------------------------------------------------------------------

@dataclass
class InvarianceReport(_Report):
    lambdas: tuple
    per_lambda_violation: dict
    max_violation: float
    n_samples: int
    seed: int
    shift: float
    mesh_id: str
    beta_description: str

    def summary(self):
        return {
            "max_violation": self.max_violation,
            "per_lambda_violation": {str(k): v for k, v
                                     in self.per_lambda_violation.items()},
            "lambdas": list(self.lambdas),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "shift": self.shift,
            "mesh_id": self.mesh_id,
            "beta": self.beta_description,
        }


def invariance_harness(op, projection, lambdas, n_samples, seed=0,
                       shift=None, sample_amplitude=2.5):
    """Check lam * resolvent(lam) maps a convex set into itself.

    ``projection`` maps nodal vectors onto the set; it must be idempotent
    (checked on every sample, ValueError otherwise). For each lam and random
    sample h the harness feeds P h through the shifted resolvent and reports
    the sup-norm distance of the output from its own projection. ``shift``
    defaults to the operator's omega0.
    """
    if shift is None:
        shift = op.omega0
    rng = np.random.default_rng(seed)
    n = op.bundle.n_total
    per_lambda = {}
    max_violation = 0.0
    for lam in lambdas:
        worst = 0.0
        for _ in range(int(n_samples)):
            raw = sample_amplitude * (rng.standard_normal(n)
                                      + 1j * rng.standard_normal(n))
            h = np.asarray(projection(raw))
            scale = max(float(np.abs(h).max()), 1e-30)
            again = np.asarray(projection(h))
            if np.abs(again - h).max() > 1e-12 * scale:
                raise ValueError("projection is not idempotent on samples")
            y = lam * op.resolvent_apply(lam, op.make_state(h),
                                         shift=shift).values
            worst = max(worst, float(np.abs(y - np.asarray(projection(y))).max()))
        per_lambda[float(lam)] = worst
        max_violation = max(max_violation, worst)
    return InvarianceReport(
        lambdas=tuple(float(l) for l in lambdas),
        per_lambda_violation=per_lambda,
        max_violation=max_violation,
        n_samples=int(n_samples),
        seed=int(seed),
        shift=float(shift),
        mesh_id=_mesh_id(op.bundle.mesh),
        beta_description=op.bundle.beta.describe(),
    )


@dataclass
class SupBoundReport(_Report):
    lambdas: tuple
    per_lambda_ratio: dict
    max_ratio: float
    n_samples: int
    seed: int
    shift: float
    sample_kind: str
    mesh_id: str
    beta_description: str

    def summary(self):
        return {
            "max_ratio": self.max_ratio,
            "per_lambda_ratio": {str(k): v for k, v
                                 in self.per_lambda_ratio.items()},
            "lambdas": list(self.lambdas),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "shift": self.shift,
            "sample_kind": self.sample_kind,
            "mesh_id": self.mesh_id,
            "beta": self.beta_description,
        }


def sup_resolvent_bound(op, lambdas, n_samples, seed=0, shift=None,
                        sample_kind="rademacher"):
    """Max over samples of ||lam (lam + shift + A)^{-1} h||_inf / ||h||_inf.

    A ratio <= 1 is the discrete sup-norm m-dissipativity of the shifted
    operator; on lumped non-obtuse meshes it holds up to solver roundoff.
    ``shift`` defaults to omega0.
    """
    if shift is None:
        shift = op.omega0
    rng = np.random.default_rng(seed)
    per_lambda = {}
    max_ratio = 0.0
    for lam in lambdas:
        worst = 0.0
        for _ in range(int(n_samples)):
            h = op.bundle.random_state(rng, kind=sample_kind)
            y = lam * op.resolvent_apply(lam, h, shift=shift).values
            worst = max(worst, float(np.abs(y).max()
                                     / np.abs(h.values).max()))
        per_lambda[float(lam)] = worst
        max_ratio = max(max_ratio, worst)
    return SupBoundReport(
        lambdas=tuple(float(l) for l in lambdas),
        per_lambda_ratio=per_lambda,
        max_ratio=max_ratio,
        n_samples=int(n_samples),
        seed=int(seed),
        shift=float(shift),
        sample_kind=sample_kind,
        mesh_id=_mesh_id(op.bundle.mesh),
        beta_description=op.bundle.beta.describe(),
    )


# ---------------------------------------------------------------------------
# Stampacchia stopping lemma
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StampacchiaInput:
    """Data of the stopping inequality phi(h) <= c (h-k)^(-alpha) phi(k)^delta."""

    c_phi: float
    alpha: float
    delta: float
    phi0: float

    def __post_init__(self):
        if not self.c_phi > 0:
            raise ValueError("c_phi must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.delta > 1:
            raise ValueError("delta must be strictly greater than 1")
        if self.phi0 < 0:
            raise ValueError("phi0 must be nonnegative")


@dataclass(frozen=True)
class StampacchiaResult:
    input: StampacchiaInput
    t0: float
    gamma: float    # -1/(delta-1); certified decay exponent

    def k(self, m):
        """Threshold sequence k_m = (1 - 2^-m) t0 increasing to t0."""
        return (1.0 - 2.0 ** (-np.asarray(m, dtype=float))) * self.t0

    def decay_bound(self, m):
        """Certified bound phi(k_m) <= 2^(m alpha gamma) phi(0)."""
        m = np.asarray(m, dtype=float)
        return 2.0 ** (m * self.input.alpha * self.gamma) * self.input.phi0


def stampacchia_threshold(inp):
    """Explicit vanishing threshold of the stopping lemma.

    For a non-increasing phi with phi(h) <= c (h-k)^(-alpha) phi(k)^delta for
    all 0 <= k < h and delta > 1, phi vanishes at and beyond

        t0 = c^(1/alpha) * phi(0)^((delta-1)/alpha) * 2^(delta/(delta-1)).
    """
    gamma = -1.0 / (inp.delta - 1.0)
    if inp.phi0 == 0.0:
        return StampacchiaResult(input=inp, t0=0.0, gamma=gamma)
    t0 = (inp.c_phi ** (1.0 / inp.alpha)
          * inp.phi0 ** ((inp.delta - 1.0) / inp.alpha)
          * 2.0 ** (inp.delta / (inp.delta - 1.0)))
    return StampacchiaResult(input=inp, t0=float(t0), gamma=gamma)


def simulate_stampacchia_recursion(inp, n_steps=60):
    """Run the induction with equality: phi_m = c (k_m - k_{m-1})^-alpha phi_{m-1}^delta.

    Starting from phi_0 = phi(0) this sequence meets the certified decay
    bound exactly, so it doubles as an oracle for decay_bound.
    """
    res = stampacchia_threshold(inp)
    if res.t0 == 0.0:
        return res, np.zeros(n_steps + 1)
    phi = np.empty(n_steps + 1)
    phi[0] = inp.phi0
    for m in range(1, n_steps + 1):
        gap = 2.0 ** (-m) * res.t0
        phi[m] = inp.c_phi * gap ** (-inp.alpha) * phi[m - 1] ** inp.delta
    return res, phi


# ---------------------------------------------------------------------------
# level-set profiles and sup-norm certification
# ---------------------------------------------------------------------------

@dataclass
class LevelSetProfile:
    """Lumped-measure level sets of a nodal function.

    omega_measure(k) sums lumped interior masses at nodes with |u| > k,
    gamma_measure(k) lumped boundary masses at boundary nodes with |u| > k,
    and phi = omega_measure + gamma_measure^(two_star/s).
    """

    thresholds: np.ndarray
    omega_measure: np.ndarray
    gamma_measure: np.ndarray
    phi: np.ndarray
    p: float
    q: float
    two_star: float
    s: float
    delta: float


def _admissible_exponents(p, q, two_star, s):
    if not p > 1:
        raise ValueError("p must exceed 1 (half the dimension in 2D)")
    if not q > 1:
        raise ValueError("q must exceed the boundary dimension 1")
    if two_star is None:
        two_star = 4.0 * p / (p - 1.0)
    if s is None:
        s = 4.0 * q / (q - 1.0)
    if not two_star > 2.0 * p / (p - 1.0):
        raise ValueError("two_star must exceed 2p/(p-1)")
    if not s > 2.0 * q / (q - 1.0):
        raise ValueError("s must exceed 2q/(q-1)")
    delta = min((1.0 - 1.0 / p - 1.0 / two_star) * two_star,
                (1.0 - 1.0 / q - 1.0 / s) * s)
    if not delta > 1.0:
        raise ValueError("inadmissible exponents: delta must exceed 1")
    return float(two_star), float(s), float(delta)


def build_level_set_profile(bundle, u, p, q, two_star=None, s=None,
                            n_thresholds=64):
    """Level-set profile on a geometric threshold grid in [0, sup |u|]."""
    two_star, s, delta = _admissible_exponents(p, q, two_star, s)
    uv = _values(u)
    sup = float(np.abs(uv).max()) if len(uv) else 0.0
    if sup == 0.0:
        ks = np.array([0.0])
    else:
        ks = np.concatenate(([0.0],
                             np.geomspace(sup * 1e-3, sup, n_thresholds - 1)))
    m_w = bundle.M_lumped.diagonal().real
    b_w = bundle.B_lumped.diagonal().real[bundle.boundary_nodes]
    abs_all = np.abs(uv)
    abs_tr = abs_all[bundle.boundary_nodes]
    omega = np.array([m_w[abs_all > k].sum() for k in ks])
    gamma = np.array([b_w[abs_tr > k].sum() for k in ks])
    phi = omega + gamma ** (two_star / s)
    return LevelSetProfile(thresholds=ks, omega_measure=omega,
                           gamma_measure=gamma, phi=phi, p=float(p),
                           q=float(q), two_star=two_star, s=s, delta=delta)


_COERCIVITY_CACHE = weakref.WeakKeyDictionary()


def coercivity_constant(bundle, omega0=None):
    """Smallest generalized eigenvalue of (Re S_omega0, H1 Gram).

    This is the best constant alpha with Re form_omega0(v, v) >= alpha
    ||v||_H1^2 over the discrete space; it is mesh-dependent in principle
    and recomputed (cached) per bundle.
    """
    if omega0 is None:
        omega0 = choose_omega0(bundle.beta)
    cache = _COERCIVITY_CACHE.setdefault(bundle, {})
    key = float(omega0)
    if key in cache:
        return cache[key]
    S = shifted_form_matrix(bundle, omega0)
    re_s = ((S + S.H) * 0.5).real()
    X = bundle.h1_gram.real()
    n = bundle.n_total
    if n <= 600:
        w = scipy.linalg.eigh(re_s.to_dense(), X.to_dense(),
                              eigvals_only=True, subset_by_index=[0, 0])
        alpha = float(w[0])
    else:
        w = spla.eigsh(re_s._m, k=1, M=X._m.tocsc(), sigma=0, which="LM",
                       return_eigenvectors=False)
        alpha = float(w[0])
    cache[key] = alpha
    return alpha


@dataclass
class CertificateReport(_Report):
    t0: float
    sup_norm: float
    certified: bool
    c_hat: float
    alpha_coercivity: float
    energy_checked: bool
    energy_min_margin: float
    energy_ok: bool
    data_norm: float           # ||f||_p + ||g||_q (lumped nodal norms)
    profile: LevelSetProfile = field(repr=False)
    mesh_id: str = ""

    @property
    def overshoot(self):
        return self.t0 / self.sup_norm if self.sup_norm > 0 else np.inf

    @property
    def instance_constant(self):
        """Per-instance constant t0 / (||f||_p + ||g||_q)."""
        return self.t0 / self.data_norm if self.data_norm > 0 else np.inf

    def summary(self):
        return {
            "t0": self.t0,
            "sup_norm": self.sup_norm,
            "certified": self.certified,
            "c_hat": self.c_hat,
            "alpha_coercivity": self.alpha_coercivity,
            "energy_checked": self.energy_checked,
            "energy_ok": self.energy_ok,
            "energy_min_margin": self.energy_min_margin,
            "data_norm": self.data_norm,
            "overshoot": self.overshoot,
            "mesh_id": self.mesh_id,
        }


def _data_norms(bundle, f, g, p, q):
    norm_f = 0.0
    norm_g = 0.0
    if f is not None:
        fv = (nodal_interior_values(bundle.mesh, f) if callable(f)
              else np.asarray(f, dtype=complex))
        norm_f = bundle.interior_lp_norm(fv, p)
    if g is not None:
        gv = (nodal_boundary_values(bundle, g) if callable(g)
              else np.asarray(g, dtype=complex))
        norm_g = bundle.boundary_lp_norm(gv, q)
    return norm_f, norm_g


def linfty_certify(bundle, u, f, g, p, q, lam=None, two_star=None, s=None,
                   n_thresholds=64, check_energy=True):
    """Certify a sup-norm bound for a solution by level-set iteration.

    Builds the level-set profile of u, fits the smallest constant c_hat with
    phi(h) <= c_hat (h - k)^(-two_star) phi(k)^delta over all sampled grid
    pairs k < h, feeds it through the stopping lemma, and reports the
    resulting threshold t0 together with the a-posteriori soundness check
    sup |u| <= t0 (1 + 1e-9).

    With ``check_energy`` the intermediate inequality
    alpha ||v_k||_H1^2 <= Re (integral f conj(v_k) + boundary integral
    g conj(v_k)) is verified at every grid threshold, v_k being the nodal
    excess over level k; this is the energy step feeding the profile bound
    and requires (f, g) to be the actual data of the solve (lam >= omega0).
    """
    uv = _values(u)
    profile = build_level_set_profile(bundle, uv, p, q, two_star=two_star,
                                      s=s, n_thresholds=n_thresholds)
    sup = float(np.abs(uv).max()) if len(uv) else 0.0
    norm_f, norm_g = _data_norms(bundle, f, g, p, q)
    alpha = coercivity_constant(bundle) if check_energy else np.nan

    energy_ok = True
    energy_min_margin = np.inf
    if check_energy:
        load = build_load(bundle, f, g)
        X = bundle.h1_gram.astype(complex)
        for k in profile.thresholds:
            if k >= sup:
                continue
            v_k = uv - truncate(uv, k)
            lhs = alpha * float(np.vdot(v_k, X @ v_k).real)
            rhs = float(np.vdot(v_k, load).real)
            margin = rhs - lhs
            tol = 1e-9 * (1.0 + abs(rhs) + abs(lhs))
            energy_min_margin = min(energy_min_margin, margin)
            if margin < -tol:
                energy_ok = False

    if sup == 0.0 or profile.phi[0] == 0.0:
        # degenerate profile: report the sup norm directly
        return CertificateReport(
            t0=sup, sup_norm=sup, certified=True, c_hat=0.0,
            alpha_coercivity=float(alpha), energy_checked=bool(check_energy),
            energy_min_margin=(float(energy_min_margin)
                               if energy_min_margin != np.inf else 0.0),
            energy_ok=energy_ok, data_norm=norm_f + norm_g,
            profile=profile, mesh_id=_mesh_id(bundle.mesh),
        )

    ks = profile.thresholds
    phi = profile.phi
    c_hat = 0.0
    for i in range(len(ks) - 1):
        if phi[i] <= 0.0:
            continue
        gaps = ks[i + 1:] - ks[i]
        ratios = phi[i + 1:] * gaps ** profile.two_star / phi[i] ** profile.delta
        c_hat = max(c_hat, float(ratios.max()))

    if c_hat == 0.0:
        t0 = sup
    else:
        t0 = stampacchia_threshold(StampacchiaInput(
            c_phi=c_hat, alpha=profile.two_star, delta=profile.delta,
            phi0=float(phi[0]))).t0
    return CertificateReport(
        t0=float(t0), sup_norm=sup,
        certified=bool(sup <= t0 * (1.0 + 1e-9)),
        c_hat=float(c_hat), alpha_coercivity=float(alpha),
        energy_checked=bool(check_energy),
        energy_min_margin=(float(energy_min_margin)
                           if energy_min_margin != np.inf else 0.0),
        energy_ok=energy_ok, data_norm=norm_f + norm_g,
        profile=profile, mesh_id=_mesh_id(bundle.mesh),
    )


# ---------------------------------------------------------------------------
# trace constant
# ---------------------------------------------------------------------------

@dataclass
class TraceConstantReport(_Report):
    c1: float
    c1_random: float
    c1_ascent: float
    s: float
    seed: int
    maximizer: np.ndarray = field(repr=False)
    mesh_id: str = ""

    def summary(self):
        return {"c1": self.c1, "c1_random": self.c1_random,
                "c1_ascent": self.c1_ascent, "s": self.s, "seed": self.seed,
                "mesh_id": self.mesh_id}


def trace_constant_estimate(bundle, s, n_random=500, n_ascent=50, seed=0):
    """Estimate the trace constant c1 in ||u|_Gamma||_{L^s} <= c1 ||u||_{H1}.

    Lower bound by maximizing the ratio over random nodal vectors, then
    refining with projected gradient ascent on the H1 sphere from the best
    random start. The ascent direction is the gradient in the H1 metric
    (preconditioned by the inverse Gram matrix); for s = 2 this is inverse
    power iteration for the generalized eigenproblem of the boundary mass
    against the H1 Gram. Reported with the maximizing vector.
    """
    if s < 2:
        raise ValueError("s must be at least 2")
    rng = np.random.default_rng(seed)
    X = bundle.h1_gram.real()
    X_lu = lu_factor(X)
    n = bundle.n_total

    def ratio(u):
        h1 = np.sqrt(max(float(u @ (X @ u)), 1e-300))
        return bundle.boundary_lp_norm(u[bundle.boundary_nodes], s) / h1

    best_u, best_r = None, 0.0
    for _ in range(int(n_random)):
        u = rng.standard_normal(n)
        r = ratio(u)
        if r > best_r:
            best_r, best_u = r, u
    c1_random = best_r

    w_b = bundle.B_lumped.diagonal().real
    u = best_u / np.sqrt(float(best_u @ (X @ best_u)))
    r_cur = ratio(u)
    step = 1.0
    for _ in range(int(n_ascent)):
        a = np.abs(u) ** (s - 1.0) * np.sign(u) * w_b
        norm_s = bundle.boundary_lp_norm(u[bundle.boundary_nodes], s)
        # gradient of log ratio in the H1 metric, on the H1 sphere
        grad = X_lu.solve(a / max(norm_s ** s, 1e-300)).real - u
        cand = u + step * grad
        cand = cand / np.sqrt(float(cand @ (X @ cand)))
        r_new = ratio(cand)
        if r_new > r_cur:
            u, r_cur = cand, r_new
            step = min(step * 1.5, 4.0)
        else:
            step *= 0.5
    c1_ascent = r_cur
    if c1_ascent >= c1_random:
        best_u = u
    return TraceConstantReport(
        c1=max(c1_random, c1_ascent), c1_random=c1_random,
        c1_ascent=c1_ascent, s=float(s), seed=int(seed), maximizer=best_u,
        mesh_id=_mesh_id(bundle.mesh),
    )


# ---------------------------------------------------------------------------
# constructive density witness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WitnessTarget:
    """Twice-differentiable closed-form target sampled nodally.

    ``value`` and ``laplacian`` map (x, y) arrays to values; ``gradient``
    returns the pair (d/dx, d/dy).
    """

    value: callable
    gradient: callable
    laplacian: callable


@dataclass
class WitnessIteration:
    r: float
    achieved: float
    certified: float
    f_residual_norm: float


@dataclass
class WitnessReport(_Report):
    state: ProductState = field(repr=False)
    achieved: float = np.inf
    certified_bound: float = np.inf
    r_final: float = 0.0
    status: str = ""
    lam: float = 0.0
    iterations: list = field(default_factory=list)
    domain_defect: float = np.inf
    mesh_id: str = ""

    def summary(self):
        return {"achieved": self.achieved,
                "certified_bound": self.certified_bound,
                "r_final": self.r_final, "status": self.status,
                "lam": self.lam, "domain_defect": self.domain_defect,
                "n_iterations": len(self.iterations),
                "mesh_id": self.mesh_id}


def _distance_to_boundary(mesh):
    """Per-vertex distance to the boundary polyline, nearest edge and foot point."""
    P = mesh.vertices
    A = mesh.vertices[mesh.boundary_edges[:, 0]]
    B = mesh.vertices[mesh.boundary_edges[:, 1]]
    D = B - A
    len2 = (D * D).sum(axis=1)
    diff = P[:, None, :] - A[None, :, :]
    t = np.clip((diff * D[None, :, :]).sum(axis=2) / len2[None, :], 0.0, 1.0)
    foot = A[None, :, :] + t[:, :, None] * D[None, :, :]
    dist = np.linalg.norm(P[:, None, :] - foot, axis=2)
    nearest = np.argmin(dist, axis=1)
    rows = np.arange(len(P))
    return dist[rows, nearest], nearest, foot[rows, nearest]


def wentzell_domain_defect(bundle, state, f, g, lam):
    """Boundary-L2 norm of flux + (beta u)|_Gamma + discrete Laplacian trace.

    The discrete Laplacian of a Robin solution with data (f, g) is lam u - f
    inside and its trace is lam u|_Gamma - g; membership in the discrete
    operator domain means the Green-formula flux h satisfies
    h + (beta u)|_Gamma + (lam u|_Gamma - g) = 0, which the Galerkin
    structure enforces up to solver tolerance.
    """
    uv = _values(state)
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    lap = lam * uv - f
    h = discrete_normal_derivative(bundle, uv, lap)
    bn = bundle.boundary_nodes
    beta_u = bundle._B_gamma_lu.solve((bundle.B_beta @ uv)[bn])
    defect = h + beta_u + lam * uv[bn] - g
    return bundle.boundary_lp_norm(defect, 2)


def density_witness(op, target, epsilon, p=4.0, q=4.0, lam=None,
                    r_init=None):
    """Construct an operator-domain function uniformly close to a smooth target.

    Builds data Phi from the target w: an interior part (lam w - Laplacian w)
    cut off within distance r of the boundary, completed by a collar
    extension of the boundary target flux + (beta + lam) w; solves the Robin
    problem with that data, so the solution lies in the discrete operator
    domain by construction. The collar radius r is halved until the
    certified sup bound for the defect drops below epsilon; once r falls
    under the mesh resolution the collar degenerates to the boundary data
    channel alone (the discretization floor) and the finest achieved error
    is reported.
    """
    bundle = op.bundle
    mesh = bundle.mesh
    if lam is None:
        lam = max(op.omega0, 1.0)
    lam = float(lam)
    h_min = quality_report(mesh).h_min
    verts = mesh.vertices
    xs, ys = verts[:, 0], verts[:, 1]
    w_nodal = np.asarray(target.value(xs, ys), dtype=complex)
    interior_target = lam * w_nodal - np.asarray(target.laplacian(xs, ys),
                                                 dtype=complex)

    dist, nearest, foot = _distance_to_boundary(mesh)
    normals = mesh.boundary_normals()
    beta_vals = bundle.beta.values

    fx, fy = foot[:, 0], foot[:, 1]
    gx, gy = target.gradient(fx, fy)
    nu = normals[nearest]
    t_ext = (np.asarray(gx, dtype=complex) * nu[:, 0]
             + np.asarray(gy, dtype=complex) * nu[:, 1]
             + (beta_vals[nearest] + lam)
             * np.asarray(target.value(fx, fy), dtype=complex))

    def boundary_target(x, y, edge):
        gx, gy = target.gradient(x, y)
        return (complex(gx) * edge.normal[0] + complex(gy) * edge.normal[1]
                + (beta_vals[edge.index] + lam) * complex(target.value(x, y)))

    g_trace = nodal_boundary_values(bundle, boundary_target)

    if r_init is None:
        span = verts.max(axis=0) - verts.min(axis=0)
        r_init = 0.25 * float(min(span))

    radii = []
    r = float(r_init)
    while r >= 0.5 * h_min:
        radii.append(r)
        r /= 2.0
    radii.append(0.0)   # collar below mesh resolution: pure data channels

    iterations = []
    best = None
    status = "floor"
    for r in radii:
        if r == 0.0:
            f_nodal = interior_target.copy()
        else:
            chi = np.clip(dist / r - 1.0, 0.0, 1.0)
            psi = np.clip(1.0 - dist / r, 0.0, 1.0)
            f_nodal = chi * interior_target + psi * t_ext
            f_nodal[bundle.boundary_nodes] = g_trace
        u = robin_solve(bundle, lam, f=f_nodal, g=g_trace, omega0=op.omega0)
        achieved = float(np.abs(u.values - w_nodal).max())
        f_def = f_nodal - interior_target
        cert = linfty_certify(bundle, u.values - w_nodal, f_def, None,
                              p, q, lam=lam, check_energy=False)
        res_norm = bundle.interior_lp_norm(f_def, p)
        iterations.append(WitnessIteration(r=r, achieved=achieved,
                                           certified=cert.t0,
                                           f_residual_norm=res_norm))
        if best is None or achieved < best[1]:
            best = (u, achieved, cert.t0, r, f_nodal)
        if cert.t0 <= epsilon:
            status = "certified"
            break

    u, achieved, certified, r_final, f_nodal = best
    defect = wentzell_domain_defect(bundle, u, f_nodal, g_trace, lam)
    return WitnessReport(state=u, achieved=achieved,
                         certified_bound=certified, r_final=r_final,
                         status=status, lam=lam, iterations=iterations,
                         domain_defect=float(defect),
                         mesh_id=_mesh_id(mesh))


# ---------------------------------------------------------------------------
# interior Laplacian (pure Neumann) submarkovian checks
# ---------------------------------------------------------------------------

@dataclass
class NeumannReport(_Report):
    equilibrium_error: float
    positivity_min: float
    sup_ratio_max: float
    lumped: bool
    nonobtuse: bool
    n_samples: int
    seed: int
    lam: float
    dt: float
    mesh_id: str

    def passed(self, eq_tol=1e-10, pos_tol=1e-12, ratio_tol=1e-10):
        return (self.equilibrium_error <= eq_tol
                and self.positivity_min >= -pos_tol
                and self.sup_ratio_max <= 1.0 + ratio_tol)

    def summary(self):
        return {
            "equilibrium_error": self.equilibrium_error,
            "positivity_min": self.positivity_min,
            "sup_ratio_max": self.sup_ratio_max,
            "lumped": self.lumped,
            "nonobtuse": self.nonobtuse,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "lam": self.lam,
            "dt": self.dt,
            "mesh_id": self.mesh_id,
        }


def neumann_checks(mesh, lam=1.0, dt=0.05, n_samples=20, seed=0):
    """Submarkovian checks for the interior-only (Neumann) Laplacian.

    Builds the boundary-free operator on lumped masses and measures
    (i) preservation of the constant state by one implicit Euler step,
    (ii) positivity of the resolvent on nonnegative data,
    (iii) the sup-norm resolvent ratio (no shift).
    Failures are findings reported in the result, not exceptions.
    """
    bundle = assemble(mesh, beta=0.0, lumped=True)
    op = WentzellOperator.neumann(bundle)
    rng = np.random.default_rng(seed)

    ones = bundle.constant_state(1.0)
    eq_err = float(np.abs(op.step_implicit_euler(ones, dt).values - 1.0).max())

    n = bundle.n_total
    pos_min = np.inf
    samples = [np.eye(1, n, rng.integers(n)).ravel().astype(complex)]
    samples += [rng.random(n).astype(complex) for _ in range(int(n_samples) - 1)]
    for h in samples:
        y = lam * op.resolvent_apply(lam, op.make_state(h), shift=0.0).values
        pos_min = min(pos_min, float(y.real.min()),
                      -float(np.abs(y.imag).max()))

    ratio = sup_resolvent_bound(op, [lam], n_samples, seed=seed, shift=0.0,
                                sample_kind="rademacher").max_ratio
    return NeumannReport(
        equilibrium_error=eq_err,
        positivity_min=float(pos_min),
        sup_ratio_max=float(ratio),
        lumped=True,
        nonobtuse=quality_report(mesh).is_nonobtuse,
        n_samples=int(n_samples),
        seed=int(seed),
        lam=float(lam),
        dt=float(dt),
        mesh_id=_mesh_id(mesh),
    )
