import numpy as np
import pytest

from wentzell_lab.assembly import (BoundaryCoefficient, assemble,
                                   integration_errors, nodal_interior_values)
from wentzell_lab.mesh import generate_rectangle
from wentzell_lab.semigroup import (SectorViolationError, WentzellOperator,
                                    choose_omega0, evolve, robin_solve,
                                    sector_estimate)


def make_op(n=8, beta=0.0, lumped=False):
    bundle = assemble(generate_rectangle(1, 1, n, n), beta=beta, lumped=lumped)
    return WentzellOperator.from_bundle(bundle), bundle


# -- omega0 ----------------------------------------------------------------------


def test_choose_omega0_examples():
    mesh = generate_rectangle(1, 1, 2, 2)
    assert choose_omega0(BoundaryCoefficient.constant(mesh, 0.0)) == 1.0
    assert choose_omega0(BoundaryCoefficient.constant(mesh, -3.0)) == 3.0
    assert choose_omega0(BoundaryCoefficient.constant(mesh, 1 + 5j)) == 5.0


def test_omega0_guarantees():
    mesh = generate_rectangle(1, 1, 2, 2)
    for z in (0.0, -3.0, 1 + 5j, -1 + 2j, 0.25 - 0.5j):
        beta = BoundaryCoefficient.constant(mesh, z)
        w0 = choose_omega0(beta)
        assert w0 + beta.ess_inf_re >= 0.0
        assert w0 >= 1.0


# -- resolvent --------------------------------------------------------------------


def test_resolvent_constants_exact():
    op, bundle = make_op(beta=0.0)
    for lam in (1.0, 2.5, 10.0):
        u = op.resolvent_apply(lam, bundle.constant_state(1.0))
        assert np.abs(u.values - 1.0 / lam).max() <= 1e-12


def test_resolvent_convergence_to_identity():
    # lam R(lam) h -> h in the G norm, monotone across decades
    op, bundle = make_op(beta=0.0)
    rng = np.random.default_rng(0)
    h = bundle.random_state(rng)
    errs = []
    for lam in (1e2, 1e4, 1e6):
        u = op.resolvent_apply(lam, h)
        errs.append(bundle.g_norm(lam * u.values - h.values))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 1e-3 * bundle.g_norm(h.values)


def test_resolvent_weak_identity():
    # v* G (lam u + A u) = v* G h for the computed resolvent u
    op, bundle = make_op(beta=1.0)
    lam = 3.0
    h = bundle.constant_state(1.0)
    u = op.resolvent_apply(lam, h)
    lhs_vec = lam * (op.G @ u.values) + op.S0 @ u.values
    rhs_vec = op.G @ h.values
    rng = np.random.default_rng(1)
    for _ in range(20):
        v = rng.standard_normal(bundle.n_total) \
            + 1j * rng.standard_normal(bundle.n_total)
        assert abs(np.vdot(v, lhs_vec) - np.vdot(v, rhs_vec)) \
            <= 1e-9 * (1 + abs(np.vdot(v, rhs_vec)))


def test_resolvent_requires_positive_lambda():
    op, _ = make_op()
    with pytest.raises(ValueError):
        op.resolvent_apply(0.0, op.bundle.constant_state(1.0))


def test_resolvent_identity():
    # R(lam) - R(mu) = (mu - lam) R(lam) R(mu)
    op, bundle = make_op(n=10, beta=1 + 1j)
    rng = np.random.default_rng(2)
    for lam, mu in ((1.0, 2.0), (2.0, 5.0)):
        h = bundle.random_state(rng)
        lhs = op.resolvent_apply(lam, h).values - op.resolvent_apply(mu, h).values
        rhs = (mu - lam) * op.resolvent_apply(
            lam, op.resolvent_apply(mu, h)).values
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


# -- Robin solver -----------------------------------------------------------------


def test_robin_constant_solution_exact():
    # lam c = f and (lam + beta) c = g make u = c an exact discrete solution
    mesh = generate_rectangle(1, 1, 6, 6)
    bundle = assemble(mesh, beta=0.5)
    f = np.full(bundle.n_total, 1.0 + 0j)
    g = np.full(len(bundle.boundary_nodes), 1.5 + 0j)
    u = robin_solve(bundle, 1.0, f=f, g=g)
    assert np.abs(u.values - 1.0).max() <= 1e-12


def test_robin_zero_data_zero_solution():
    mesh = generate_rectangle(1, 1, 5, 5)
    bundle = assemble(mesh, beta=0.0)
    u = robin_solve(bundle, 1.0)
    assert np.abs(u.values).max() == 0.0


def test_robin_lambda_below_omega0_rejected():
    mesh = generate_rectangle(1, 1, 4, 4)
    bundle = assemble(mesh, beta=-3.0)
    with pytest.raises(ValueError):
        robin_solve(bundle, 1.0)


@pytest.mark.parametrize("beta_val", [0.0, 1 + 1j])
def test_robin_manufactured_convergence(beta_val):
    lam = 1.0
    exact = lambda x, y: x ** 2 + y ** 2
    grad = lambda x, y: (2 * x, 2 * y)
    errs = []
    for n in (8, 16, 32):
        mesh = generate_rectangle(1, 1, n, n)
        bundle = assemble(mesh, beta=beta_val)
        beta = bundle.beta.values

        def g(x, y, edge):
            gx, gy = grad(x, y)
            return (gx * edge.normal[0] + gy * edge.normal[1]
                    + (lam + beta[edge.index]) * exact(x, y))

        u = robin_solve(bundle, lam, f=lambda x, y: lam * exact(x, y) - 4.0,
                        g=g)
        errs.append(integration_errors(mesh, u.values, exact, grad))
    l2_orders = [np.log2(errs[i][0] / errs[i + 1][0]) for i in range(2)]
    h1_orders = [np.log2(errs[i][1] / errs[i + 1][1]) for i in range(2)]
    assert min(l2_orders) >= 1.8
    assert min(h1_orders) >= 0.85


# -- steppers ----------------------------------------------------------------------


def test_implicit_euler_equilibrium():
    op, bundle = make_op(beta=0.0)
    u = op.step_implicit_euler(bundle.constant_state(1.0), 0.25)
    assert np.abs(u.values - 1.0).max() <= 1e-13


def test_implicit_euler_decays_constants_for_positive_beta():
    op, bundle = make_op(beta=2.0, lumped=True)
    u = op.step_implicit_euler(bundle.constant_state(1.0), 0.1)
    assert np.abs(u.values).max() < 1.0


def test_implicit_euler_first_order_in_dt():
    op, bundle = make_op(n=8, beta=0.0)
    x, y = (bundle.mesh.vertices[:, 0], bundle.mesh.vertices[:, 1])
    u0 = bundle.state(np.cos(np.pi * x) * np.cos(np.pi * y))
    # Taylor oracle: ||u+ - u||_G = dt ||A u+||_G <= dt ||A u0||_G since the
    # step is a G-contraction for accretive forms
    bound_const = bundle.g_norm(op.apply(u0).values)
    errs = {}
    for dt in (2e-2, 1e-2, 4e-4, 2e-4, 1e-4):
        u = op.step_implicit_euler(u0, dt)
        errs[dt] = bundle.g_norm(u.values - u0.values)
        assert errs[dt] <= dt * bound_const * (1 + 1e-9)
    # asymptotically first order: halving dt halves the difference
    assert errs[4e-4] / errs[2e-4] == pytest.approx(2.0, rel=0.1)
    assert errs[2e-4] / errs[1e-4] == pytest.approx(2.0, rel=0.1)


def test_crank_nicolson_equilibrium_and_identity():
    op, bundle = make_op(beta=0.0)
    ones = bundle.constant_state(1.0)
    u = op.step_crank_nicolson(ones, 0.3)
    assert np.abs(u.values - 1.0).max() <= 1e-13
    v = op.step_crank_nicolson(ones, 0.0)
    assert v is ones


def test_crank_nicolson_second_order():
    # Richardson-style self convergence: halving dt cuts the error by ~4
    op, bundle = make_op(n=8, beta=1 + 1j)
    x, y = (bundle.mesh.vertices[:, 0], bundle.mesh.vertices[:, 1])
    u0 = bundle.state(np.sin(np.pi * x) * np.sin(np.pi * y) + 0.2j * x)
    t = 0.2

    def run(n_steps):
        u = u0
        for _ in range(n_steps):
            u = op.step_crank_nicolson(u, t / n_steps)
        return u.values

    ref = run(4096)
    errs = [np.linalg.norm(run(n) - ref) for n in (32, 64, 128)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.3)


def test_euler_exponential_basics():
    op, bundle = make_op(beta=1.0)
    rng = np.random.default_rng(3)
    u0 = bundle.random_state(rng)
    assert op.euler_exponential(u0, 0.0, 5) is u0
    one_step = op.step_implicit_euler(u0, 0.7)
    np.testing.assert_array_equal(op.euler_exponential(u0, 0.7, 1).values,
                                  one_step.values)
    with pytest.raises(ValueError):
        op.euler_exponential(u0, 1.0, 0)


def test_euler_exponential_halving():
    op, bundle = make_op(n=8, beta=1 + 1j)
    x, y = (bundle.mesh.vertices[:, 0], bundle.mesh.vertices[:, 1])
    u0 = bundle.state(np.sin(np.pi * x) * np.sin(np.pi * y)
                      + 0.5 * np.cos(np.pi * x) + 0.3j * (x + y))
    t = 0.1
    ref = u0
    for _ in range(1024):
        ref = op.step_crank_nicolson(ref, t / 1024)
    errs = [bundle.g_norm(op.euler_exponential(u0, t, n).values - ref.values)
            for n in (8, 16, 32, 64)]
    for a, b in zip(errs, errs[1:]):
        assert 0.4 <= b / a <= 0.6


# -- evolution ----------------------------------------------------------------------


def test_evolve_constant_trajectory():
    op, bundle = make_op(beta=0.0)
    traj = evolve(op, bundle.constant_state(1.0), 0.5, 0.05)
    assert traj.completed
    for state in traj.states:
        assert np.abs(state.values - 1.0).max() <= 1e-12


def test_evolve_mass_conservation():
    op, bundle = make_op(n=12, beta=0.0)
    rng = np.random.default_rng(4)
    traj = evolve(op, bundle.random_state(rng), 1.0, 0.01, keep_states=False)
    mass = traj.observables["mass"]
    assert np.abs(mass - mass[0]).max() <= 1e-10 * abs(mass[0])


def test_evolve_sup_norm_monotone_on_dmp_mesh():
    # lumped non-obtuse mesh with real beta >= 0: discrete maximum principle
    from wentzell_lab.mesh import quality_report
    op, bundle = make_op(n=10, beta=0.5, lumped=True)
    assert quality_report(bundle.mesh).is_nonobtuse  # oracle precondition
    rng = np.random.default_rng(5)
    traj = evolve(op, bundle.random_state(rng), 0.5, 0.05)
    sup = traj.observables["sup_norm"]
    assert np.all(np.diff(sup) <= 1e-12)


def test_evolve_rejects_bad_input():
    op, bundle = make_op()
    ones = bundle.constant_state(1.0)
    with pytest.raises(ValueError):
        evolve(op, ones, 1.0, 0.01, scheme="leapfrog")
    with pytest.raises(ValueError):
        evolve(op, ones, 1.0, -0.1)
    with pytest.raises(ValueError):
        evolve(op, ones, 1.0, 0.3)  # not an integer number of steps


def test_evolve_zero_horizon():
    op, bundle = make_op()
    traj = evolve(op, bundle.constant_state(2.0), 0.0, 0.01)
    assert len(traj.times) == 1
    assert traj.completed


def test_evolve_flags_partial_trajectory(monkeypatch):
    op, bundle = make_op(beta=0.0)
    original = WentzellOperator.step_implicit_euler
    calls = {"n": 0}

    def failing(self, state, dt):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RuntimeError("synthetic solver failure")
        return original(self, state, dt)

    monkeypatch.setattr(WentzellOperator, "step_implicit_euler", failing)
    traj = evolve(op, bundle.constant_state(1.0), 0.1, 0.01)
    assert not traj.completed
    assert "synthetic solver failure" in traj.failure
    assert len(traj.times) == 3  # initial plus the two successful steps


def test_trajectory_csv_deterministic(tmp_path):
    op, bundle = make_op(n=4, beta=0.0)
    rng = np.random.default_rng(6)
    traj = evolve(op, bundle.random_state(rng), 0.1, 0.02)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    traj.write_csv(p1, header_pairs=[("seed", "6")])
    traj.write_csv(p2, header_pairs=[("seed", "6")])
    assert p1.read_bytes() == p2.read_bytes()
    text = p1.read_text()
    assert text.startswith("# seed = 6\n")
    assert "t,mass_re,mass_im,sup_norm,h1_norm,energy_re,energy_im" in text


# -- adjointness and sector -----------------------------------------------------------


def test_g_adjointness_real_beta():
    op, bundle = make_op(n=10, beta=1.0)
    rng = np.random.default_rng(7)
    scale_mat = max(op.S0.max_abs(), 1.0)
    for _ in range(25):
        u = rng.standard_normal(bundle.n_total) \
            + 1j * rng.standard_normal(bundle.n_total)
        v = rng.standard_normal(bundle.n_total) \
            + 1j * rng.standard_normal(bundle.n_total)
        Au = op.apply(bundle.state(u)).values
        Av = op.apply(bundle.state(v)).values
        lhs = np.vdot(u, op.G @ Av)
        rhs = np.vdot(Au, op.G @ v)
        scale = scale_mat * bundle.g_norm(u) * bundle.g_norm(v)
        assert abs(lhs - rhs) <= 1e-9 * scale


def test_sector_real_beta_flat():
    op, _ = make_op(n=8, beta=2.0)
    est = sector_estimate(op, op.omega0, 100, seed=8)
    assert est.theta <= 1e-9
    assert est.samples == 100


def test_sector_imaginary_beta_quarter_angle():
    b = 3.0
    op, _ = make_op(n=8, beta=1j * b)
    est = sector_estimate(op, b, 200, seed=9)
    assert est.theta <= np.pi / 4 + 1e-9


def test_sector_constant_witness_value():
    op, bundle = make_op(n=4, beta=0.0)
    ones = np.ones(bundle.n_total, dtype=complex)
    S1 = op.shifted_form(1.0)
    value = np.vdot(ones, S1 @ ones)
    expected = bundle.mesh.area() + bundle.mesh.perimeter()
    assert value.real == pytest.approx(expected, rel=1e-13)
    assert abs(value.imag) <= 1e-13
    assert abs(np.angle(value)) <= 1e-13


def test_sector_violation_carries_witness():
    # an operator shifted far negative must leave the sector
    op, bundle = make_op(n=4, beta=0.0)
    with pytest.raises(SectorViolationError) as err:
        sector_estimate(op, -100.0, 50, seed=10)
    assert err.value.witness.shape == (bundle.n_total,)
    assert err.value.value.real < 0
