"""Discrete Wentzell operator, resolvents, Robin solver and time steppers.

The discrete product space is carried entirely by the Gram matrix G = M + B:
conforming P1 functions embed into the interior/boundary product via their
trace, the embedding is injective with closed image, and a decoupled pair
whose boundary component is not the trace of its interior component has no
conforming representative. Every operation below therefore works on nodal
vectors and produces trace-consistent ProductStates by construction.

The operator realized is A = G^{-1} (K + B_beta), applied weakly (via solves
and products, never densified): for all nodal u, v one has
v* G (A u) = v* (K + B_beta) u up to solver tolerance.
"""

from dataclasses import dataclass, field

import numpy as np

from .assembly import (OperatorBundle, ProductState, boundary_load,
                       interior_load, shifted_form_matrix)
from .linalg import lu_factor

__all__ = [
    "choose_omega0",
    "WentzellOperator",
    "SectorEstimate",
    "SectorViolationError",
    "Trajectory",
    "robin_solve",
    "evolve",
]


def choose_omega0(beta):
    """Shift making the operator dissipative-friendly in one knob.

    omega0 = max(1, -min Re(beta), max |Im(beta)|). This guarantees
    omega0 + Re(beta) >= 0 (the sup-norm contractivity hypothesis) and strict
    coercivity of the shifted form.
    """
    return float(max(1.0, -beta.ess_inf_re, beta.sup_abs_im))


class SectorViolationError(RuntimeError):
    """A sampled form value left the right half plane; carries the witness."""

    def __init__(self, message, witness, value):
        super().__init__(message)
        self.witness = witness
        self.value = value


@dataclass(frozen=True)
class SectorEstimate:
    """Verified half-angle: all sampled shifted form values lie in the closed
    sector of this half-angle about the positive real axis."""

    omega: float
    theta: float
    samples: int


@dataclass
class Trajectory:
    """Time grid, states and per-step observables of one evolution run."""

    times: np.ndarray
    states: list
    observables: dict
    scheme: str
    dt: float
    completed: bool = True
    failure: str = None

    def write_csv(self, path, header_pairs=()):
        cols = ["t", "mass_re", "mass_im", "sup_norm", "h1_norm",
                "energy_re", "energy_im"]
        with open(path, "w", encoding="utf-8") as fh:
            for key, val in header_pairs:
                fh.write(f"# {key} = {val}\n")
            fh.write(",".join(cols) + "\n")
            for i, t in enumerate(self.times):
                mass = self.observables["mass"][i]
                energy = self.observables["energy"][i]
                row = (t, mass.real, mass.imag,
                       self.observables["sup_norm"][i],
                       self.observables["h1_norm"][i],
                       energy.real, energy.imag)
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


class WentzellOperator:
    """Discrete operator A = G^{-1} S0 with S0 = K + B_beta.

    Factorizations of a G + b S0 are cached per coefficient pair, so a time
    stepper factors once per (mesh, dt, beta) and reuses the factor across
    steps; the dominant cost is the factorization.
    """

    def __init__(self, bundle, gram, form_matrix, omega0, name="wentzell"):
        self.bundle = bundle
        self.G = gram.astype(complex)
        self.S0 = form_matrix.astype(complex)
        self.omega0 = float(omega0)
        self.name = name
        self._solvers = {}
        self._g_solver = None

    @classmethod
    def from_bundle(cls, bundle, omega0=None):
        if omega0 is None:
            omega0 = choose_omega0(bundle.beta)
        S0 = bundle.K.astype(complex) + bundle.B_beta
        return cls(bundle, bundle.G, S0, omega0)

    @classmethod
    def neumann(cls, bundle):
        """Interior-only Laplacian: boundary mass and coupling removed.

        The Gram matrix is the interior mass alone; constants are an exact
        equilibrium, so no shift is applied.
        """
        return cls(bundle, bundle.M, bundle.K, omega0=0.0, name="neumann")

    # -- plumbing -------------------------------------------------------------

    def _solver(self, a, b):
        key = (complex(a), complex(b))
        if key not in self._solvers:
            self._solvers[key] = lu_factor(a * self.G + b * self.S0)
        return self._solvers[key]

    def _solve_gram(self, rhs):
        if self._g_solver is None:
            self._g_solver = lu_factor(self.G)
        return self._g_solver.solve(rhs)

    def make_state(self, values):
        return self.bundle.state(values)

    def shifted_form(self, omega):
        return self.S0 + float(omega) * self.G

    # -- operator action -------------------------------------------------------

    def apply(self, state):
        """A u = G^{-1} S0 u."""
        return state.with_values(self._solve_gram(self.S0 @ state.values))

    def form_value(self, u, v=None):
        """Sesquilinear form v* S0 u (conjugate linear in v); v defaults to u."""
        uv = u.values if isinstance(u, ProductState) else np.asarray(u)
        vv = uv if v is None else (v.values if isinstance(v, ProductState)
                                   else np.asarray(v))
        return complex(np.vdot(vv, self.S0 @ uv))

    def resolvent_apply(self, lam, rhs, shift=0.0):
        """Solve (lam + shift + A) u = rhs in the G-inner product.

        Concretely: ((lam + shift) G + S0) u = G rhs. Well posed for
        lam + shift >= omega0 by coercivity; smaller positive shifts are
        accepted and fail loudly in the factorization if singular.
        """
        lam = float(lam)
        if lam <= 0.0:
            raise ValueError("resolvent parameter lam must be positive")
        rhs_vals = rhs.values if isinstance(rhs, ProductState) else np.asarray(rhs)
        solver = self._solver(lam + float(shift), 1.0)
        return self.make_state(solver.solve(self.G @ rhs_vals))

    # -- one-step integrators --------------------------------------------------

    def step_implicit_euler(self, state, dt):
        """(G + dt S0) u+ = G u; a single step equals (1/dt) x resolvent at 1/dt."""
        dt = float(dt)
        if dt < 0.0:
            raise ValueError("dt must be nonnegative")
        if dt == 0.0:
            return state
        solver = self._solver(1.0, dt)
        return state.with_values(solver.solve(self.G @ state.values))

    def step_crank_nicolson(self, state, dt):
        """(G + dt/2 S0) u+ = (G - dt/2 S0) u; dt = 0 is the identity."""
        dt = float(dt)
        if dt < 0.0:
            raise ValueError("dt must be nonnegative")
        if dt == 0.0:
            return state
        solver = self._solver(1.0, 0.5 * dt)
        rhs = self.G @ state.values - 0.5 * dt * (self.S0 @ state.values)
        return state.with_values(solver.solve(rhs))

    def euler_exponential(self, state, t, n):
        """Rational semigroup approximation (I + (t/n) A)^{-n} via n implicit
        Euler steps of size t/n."""
        t = float(t)
        n = int(n)
        if t < 0.0:
            raise ValueError("t must be nonnegative")
        if n < 1:
            raise ValueError("n must be at least 1")
        if t == 0.0:
            return state
        dt = t / n
        for _ in range(n):
            state = self.step_implicit_euler(state, dt)
        return state

    # -- observables -------------------------------------------------------------

    def observables(self, state):
        b = self.bundle
        v = state.values
        return {
            "mass": complex(np.sum(self.G @ v)),
            "sup_norm": b.sup_norm(v),
            "h1_norm": b.h1_norm(v),
            "energy": complex(np.vdot(v, self.S0 @ v)),
        }


_STEPPERS = {
    "implicit-euler": "step_implicit_euler",
    "crank-nicolson": "step_crank_nicolson",
}


def evolve(op, initial, t_final, dt, scheme="implicit-euler",
           keep_states=True):
    """March the semigroup to t_final, recording observables per step.

    Solver failures abort the run and return the partial trajectory with
    ``completed=False`` and the failure message attached.
    """
    if scheme not in _STEPPERS:
        raise ValueError(f"unknown scheme '{scheme}'; "
                         f"choose from {sorted(_STEPPERS)}")
    t_final = float(t_final)
    dt = float(dt)
    if t_final < 0.0:
        raise ValueError("t_final must be nonnegative")
    n_steps = 0 if t_final == 0.0 else int(round(t_final / dt))
    if t_final > 0.0:
        if dt <= 0.0:
            raise ValueError("dt must be positive when evolving")
        if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(t_final, dt):
            raise ValueError("t_final must be an integer number of steps")
    step = getattr(op, _STEPPERS[scheme])

    times = [0.0]
    states = [initial]
    obs = {k: [v] for k, v in op.observables(initial).items()}
    state = initial
    completed, failure = True, None
    for i in range(n_steps):
        try:
            state = step(state, dt)
        except Exception as exc:  # propagate content, flag the trajectory
            completed, failure = False, f"step {i + 1}: {exc}"
            break
        times.append((i + 1) * dt)
        if keep_states:
            states.append(state)
        for k, v in op.observables(state).items():
            obs[k].append(v)
    if not keep_states:
        states = [initial, state]
    return Trajectory(times=np.array(times), states=states,
                      observables={k: np.array(v) for k, v in obs.items()},
                      scheme=scheme, dt=dt, completed=completed,
                      failure=failure)


def sector_estimate(op, omega, n_samples, seed=0, re_tol=1e-12):
    """Verified sector half-angle of the shifted form's numerical range.

    Samples random complex nodal vectors u and evaluates
    q = u* (S0 + omega G) u. Returns theta = max |arg q|; raises
    SectorViolationError (with the witness vector) if any sample has
    Re q < -re_tol * scale.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    S = op.shifted_form(omega)
    scale_mat = S.max_abs()
    theta = 0.0
    for _ in range(n_samples):
        u = rng.standard_normal(op.bundle.n_total) \
            + 1j * rng.standard_normal(op.bundle.n_total)
        q = complex(np.vdot(u, S @ u))
        scale = scale_mat * float(np.vdot(u, u).real)
        if q.real < -re_tol * scale:
            raise SectorViolationError(
                f"form value {q} has negative real part at shift {omega}",
                witness=u, value=q)
        if q != 0.0:
            theta = max(theta, abs(np.angle(q)))
    return SectorEstimate(omega=float(omega), theta=theta, samples=n_samples)


def build_load(bundle, f=None, g=None):
    """Right-hand side M f + B_Gamma g with nodal or functional data.

    ``f``: nodal array over all vertices, or a callable f(x, y) integrated by
    quadrature exact for quadratics. ``g``: array over boundary nodes (mapped
    through the boundary mass), or an edge-aware callable g(x, y, edge)
    integrated edge-wise by 2-point Gauss.
    """
    n = bundle.n_total
    load = np.zeros(n, dtype=complex)
    if f is not None:
        if callable(f):
            load += interior_load(bundle.mesh, f)
        else:
            f = np.asarray(f, dtype=complex)
            if f.shape != (n,):
                raise ValueError("nodal interior data must have one value per vertex")
            load += bundle.M.astype(complex) @ f
    if g is not None:
        if callable(g):
            load += boundary_load(bundle.mesh, g)
        else:
            g = np.asarray(g, dtype=complex)
            if g.shape != (len(bundle.boundary_nodes),):
                raise ValueError("nodal boundary data must have one value per boundary node")
            padded = np.zeros(n, dtype=complex)
            padded[bundle.boundary_nodes] = g
            load += bundle.B.astype(complex) @ padded
    return load


def robin_solve(bundle, lam, f=None, g=None, omega0=None):
    """Galerkin solution of the Robin problem

        lam u - Laplace(u) = f   in the domain,
        normal_flux(u) + (lam + beta) u = g   on the boundary,

    i.e. (lam G + K + B_beta) u = M f + B_Gamma g. Requires lam >= omega0
    (coercivity); see build_load for the accepted data forms.
    """
    lam = float(lam)
    if omega0 is None:
        omega0 = choose_omega0(bundle.beta)
    if lam < omega0 - 1e-12:
        raise ValueError(f"lam = {lam} is below omega0 = {omega0}; "
                         "coercivity is not guaranteed")
    S = shifted_form_matrix(bundle, lam)
    load = build_load(bundle, f, g)
    return bundle.state(lu_factor(S).solve(load))
