import numpy as np
import pytest

from asmpc.models import (
    Box,
    InitialConditionSet,
    InputTransform,
    IntegrationBlowUpError,
    Rk4Model,
    apply_transform,
    invert_transform,
    make_cstr,
    make_example1,
    make_plant,
    make_robot,
    make_synchrotron,
    rollout,
    sample_initial_conditions,
    step,
)


@pytest.fixture(scope="module")
def synchrotron():
    return make_synchrotron()


@pytest.fixture(scope="module")
def robot():
    return make_robot()


@pytest.fixture(scope="module")
def cstr():
    return make_cstr()


class TestStep:
    def test_synchrotron_unit_state_reads_first_column(self, synchrotron):
        e1 = np.array([1.0, 0.0, 0.0, 0.0])
        nxt = step(synchrotron.model, e1, np.zeros(2))
        assert np.allclose(nxt, [1.01, -0.29, 0.0, 0.0])

    def test_synchrotron_origin_is_fixed(self, synchrotron):
        assert np.array_equal(step(synchrotron.model, np.zeros(4), np.zeros(2)), np.zeros(4))

    def test_cstr_steady_state_holds(self, cstr):
        nxt = step(cstr.model, cstr.model.x_eq, cstr.model.u_eq)
        assert np.max(np.abs(nxt - cstr.model.x_eq)) <= 1e-4

    def test_all_plants_hold_equilibrium(self):
        for name in ("synchrotron", "robot", "cstr"):
            bundle = make_plant(name)
            nxt = step(bundle.model, bundle.model.x_eq, bundle.model.u_eq)
            assert np.max(np.abs(nxt - bundle.model.x_eq)) <= 1e-4, name

    def test_dimension_mismatch_raises(self, synchrotron):
        with pytest.raises(ValueError):
            step(synchrotron.model, np.zeros(3), np.zeros(2))

    def test_blowup_guard(self):
        model = Rk4Model(
            "explosive",
            lambda x, u: x * x + u,
            lambda x, u: (x * x + u, np.diag(2 * x), np.eye(1)),
            Box([-np.inf], [np.inf]),
            Box([-np.inf], [np.inf]),
            [0.0],
            [0.0],
            1.0,
        )
        with pytest.raises(IntegrationBlowUpError):
            rollout(model, [2.0], np.zeros((30, 1)))


class TestRollout:
    def test_empty_horizon(self, synchrotron):
        states = rollout(synchrotron.model, np.ones(4) * 0.1, np.zeros((0, 2)))
        assert states.shape == (1, 4)
        assert np.array_equal(states[0], np.ones(4) * 0.1)

    def test_equilibrium_hold_is_zero(self, synchrotron):
        states = rollout(synchrotron.model, np.zeros(4), np.zeros((20, 2)))
        assert np.array_equal(states, np.zeros((21, 4)))

    def test_robot_matches_half_step_oracle(self, robot):
        fine_model = Rk4Model(
            "robot-half",
            robot.model.ode,
            robot.model.ode_jac,
            robot.model.x_box,
            robot.model.u_box,
            robot.model.x_eq,
            robot.model.u_eq,
            robot.model.sample_time,
            substeps=2,
        )
        rng = np.random.default_rng(42)
        for _ in range(5):
            x0 = np.array([-np.pi / 2, 0.0, 0.0, 0.0]) + rng.uniform(-0.3, 0.3, 4)
            u_seq = rng.uniform(-20.0, 20.0, size=(20, 2))
            coarse = rollout(robot.model, x0, u_seq)
            fine = rollout(fine_model, x0, u_seq)
            scale = max(1.0, np.max(np.abs(fine)))
            assert np.max(np.abs(coarse - fine)) / scale <= 1e-5

    def test_rollout_deterministic(self, robot):
        rng = np.random.default_rng(0)
        x0 = rng.uniform(-1, 1, 4)
        u = rng.uniform(-10, 10, (15, 2))
        a = rollout(robot.model, x0, u)
        b = rollout(robot.model, x0, u)
        assert np.array_equal(a, b)


class TestJacobians:
    @pytest.mark.parametrize("name", ["synchrotron", "robot", "cstr"])
    def test_step_jacobians_match_finite_differences(self, name):
        bundle = make_plant(name)
        model = bundle.model
        rng = np.random.default_rng(17)
        for _ in range(5):
            x = model.x_eq + rng.uniform(-0.1, 0.1, model.nx)
            u = model.u_eq + rng.uniform(-0.05, 0.05, model.nu)
            _, fx, fu = model.step_with_jac(x, u)
            h = 1e-6
            fx_fd = np.zeros_like(fx)
            for j in range(model.nx):
                dx = np.zeros(model.nx)
                dx[j] = h
                fx_fd[:, j] = (model.step_fn(x + dx, u) - model.step_fn(x - dx, u)) / (2 * h)
            fu_fd = np.zeros_like(fu)
            for j in range(model.nu):
                du = np.zeros(model.nu)
                du[j] = h
                fu_fd[:, j] = (model.step_fn(x, u + du) - model.step_fn(x, u - du)) / (2 * h)
            assert np.max(np.abs(fx - fx_fd)) <= 1e-5 * max(1.0, np.max(np.abs(fx)))
            assert np.max(np.abs(fu - fu_fd)) <= 1e-5 * max(1.0, np.max(np.abs(fu)))


class TestTransforms:
    def test_identity(self):
        t = InputTransform(kind="none")
        u = np.array([0.3, 0.1])
        assert np.array_equal(apply_transform(t, u, np.zeros(4)), u)

    def test_steady_shift_recovers_reference(self, cstr):
        t = InputTransform(kind="steady_shift", u_ref=cstr.model.u_eq)
        u = apply_transform(t, np.zeros(2), cstr.model.x_eq)
        assert np.allclose(u, [3.5, 1.4268])

    def test_prestabilize_pure_feedback(self):
        k = np.array([[1.0, 0.0, 2.0, 0.0], [0.0, -1.0, 0.0, 0.5]])
        t = InputTransform(kind="prestabilize", gain=k, x_ref=np.zeros(4), u_ref=np.zeros(2))
        x = np.array([0.1, 0.2, -0.3, 0.4])
        assert np.allclose(apply_transform(t, np.zeros(2), x), k @ x)

    @pytest.mark.parametrize("kind", ["none", "steady_shift", "prestabilize"])
    def test_round_trip_exact(self, kind):
        rng = np.random.default_rng(3)
        k = rng.standard_normal((2, 4))
        t = InputTransform(
            kind=kind,
            gain=k if kind == "prestabilize" else None,
            x_ref=np.zeros(4) if kind == "prestabilize" else None,
            u_ref=rng.standard_normal(2) if kind != "none" else None,
        )
        x = rng.standard_normal(4)
        u_c = rng.standard_normal(2)
        u_phys = apply_transform(t, u_c, x)
        back = invert_transform(t, u_phys, x)
        assert np.max(np.abs(back - u_c)) <= 4 * np.finfo(float).eps * max(
            1.0, np.max(np.abs(u_phys))
        )


class TestSampling:
    def test_degenerate_box_returns_point(self):
        ics = InitialConditionSet(box=Box([1.5, -2.0], [1.5, -2.0]))
        samples = sample_initial_conditions(ics, 1, seed=9)
        assert np.array_equal(samples, [[1.5, -2.0]])

    def test_same_seed_identical(self):
        ics = InitialConditionSet(box=Box([-1.0, -1.0], [1.0, 1.0]))
        a = sample_initial_conditions(ics, 50, seed=4)
        b = sample_initial_conditions(ics, 50, seed=4)
        assert np.array_equal(a, b)

    def test_law_of_large_numbers(self):
        ics = InitialConditionSet(box=Box([-1.0], [1.0]))
        samples = sample_initial_conditions(ics, 10_000, seed=1)
        assert abs(float(np.mean(samples))) <= 0.05

    def test_membership_validated(self, synchrotron):
        ics = InitialConditionSet(box=Box([-10.0] * 4, [10.0] * 4))
        with pytest.raises(ValueError):
            sample_initial_conditions(ics, 20, seed=0, x_box=synchrotron.model.x_box)

    def test_plant_x0_boxes_inside_state_boxes(self):
        for name in ("synchrotron", "robot", "cstr"):
            bundle = make_plant(name)
            samples = sample_initial_conditions(
                InitialConditionSet(box=bundle.x0_box), 100, seed=11, x_box=bundle.model.x_box
            )
            assert samples.shape[0] == 100

    def test_point_list_mode(self):
        ics = InitialConditionSet(points=[[1.0, 2.0], [3.0, 4.0]])
        samples = sample_initial_conditions(ics, 2, seed=0)
        assert np.array_equal(samples, [[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(ValueError):
            sample_initial_conditions(ics, 3, seed=0)


class TestExample1:
    def test_controllable_and_unconstrained(self):
        bundle = make_example1()
        a, b = bundle.model.a, bundle.model.b
        ctrb = np.hstack([b, a @ b])
        assert np.linalg.matrix_rank(ctrb) == 2
        assert not np.any(np.isfinite(bundle.model.u_box.lo))
