import numpy as np
import pytest

from bangride import (ConfigurationError, ConstraintSpec, ControllerState,
                      SimulationDiverged, ToyLinearPlant, replay_open_loop,
                      run_closed_loop, validate_monotonicity)
from bangride.models.ecm import EcmParams, EcmPlant

ECM_KW = dict(r_o=0.05, r_1=0.15, r_2=0.35, c_1=1000.0, c_2=1700.0,
              q=12000.0, a=0.002, b=7.5e-4, ocv0=3.0, ocv_slope=3.0, dt=1.0)


def hand_simulation(t_f, theta0, theta_lo, theta_hi, mu1, y_bar, gamma):
    """Line-by-line independent re-execution of the control loop on the
    integrator plant x' = x + u with outputs (u, x + u).

    Deliberately written with plain floats and no package machinery other
    than numpy clipping, as the oracle against run_closed_loop.
    """
    th = list(theta0)
    x = 0.0
    last_e, e_sum = 0.0, 0.0
    rows = []
    for t in range(t_f + 1):
        alpha = 1.0 if t == 0 else float(t) ** (-mu1)
        u = th[0] * last_e + th[1] * e_sum
        y = [u, x + u]
        e = [gamma[0] * (y_bar[0] - y[0]), gamma[1] * (y_bar[1] - y[1])]
        i_star = 1 if e[0] <= e[1] else 2
        e_act = e[i_star - 1]
        g = [-e_act * last_e, -e_act * e_sum]
        rows.append((t, u, tuple(y), tuple(e), i_star, tuple(th), alpha, e_act ** 2))
        th = [min(max(th[m] - alpha * g[m], theta_lo[m]), theta_hi[m]) for m in range(2)]
        last_e = e_act
        e_sum += e_act
        x = x + u
    return rows


class TestRunClosedLoop:
    def test_zero_horizon_single_record(self):
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[1.0, 1.0])
        cs = ControllerState()
        assert cs.last_active == 1  # active index initialized to 1 pre-measurement
        traj = run_closed_loop(model, cs, spec, 0, model.initial_state())
        assert len(traj) == 1
        assert traj.records[0].t == 0
        assert traj.records[0].u == 0.0

    def test_matches_hand_simulation_exactly(self):
        y_bar, gamma = (10.0, 5.0), (1.0, 1.0)
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=list(y_bar), gamma=list(gamma))
        cs = ControllerState(theta=np.array([0.1, 0.1]),
                             theta_lo=np.zeros(2), theta_hi=np.array([10.0, 1.0]),
                             mu1=0.5)
        traj = run_closed_loop(model, cs, spec, 60, model.initial_state())
        expected = hand_simulation(60, (0.1, 0.1), (0.0, 0.0), (10.0, 1.0),
                                   0.5, y_bar, gamma)
        for rec, (t, u, y, e, i_star, th, alpha, J) in zip(traj.records, expected):
            assert rec.t == t
            assert rec.u == u
            assert tuple(rec.y) == y
            assert tuple(rec.e) == e
            assert rec.i_star == i_star
            assert tuple(rec.theta) == th
            assert rec.alpha == alpha
            assert rec.J == J

    def test_step_indices_and_alpha_schedule(self):
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[0.2, 0.2])
        cs = ControllerState()
        traj = run_closed_loop(model, cs, spec, 9, model.initial_state())
        assert [r.t for r in traj.records] == list(range(10))
        assert traj.records[0].alpha == 1.0
        assert traj.records[4].alpha == 0.5

    def test_j_equals_active_error_squared(self):
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[0.3, 0.7])
        cs = ControllerState()
        traj = run_closed_loop(model, cs, spec, 40, model.initial_state())
        for rec in traj.records:
            assert rec.J == rec.e[rec.i_star - 1] ** 2
            assert rec.i_star == int(np.argmin(rec.e)) + 1

    def test_errors_consistent_with_weights(self):
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[2.0, 0.5])
        cs = ControllerState()
        traj = run_closed_loop(model, cs, spec, 30, model.initial_state())
        e = traj.e_matrix()
        y = traj.y_matrix()
        assert np.array_equal(e, spec.gamma * (spec.y_bar - y))

    def test_controller_trajectory_consistency(self):
        # recorded u_t must equal th1*e_active(t-1) + th2*sum_{k<t} e_active(k)
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[0.2, 0.2])
        cs = ControllerState()
        traj = run_closed_loop(model, cs, spec, 200, model.initial_state())
        le, es = 0.0, 0.0
        for rec in traj.records:
            assert rec.u == rec.theta[0] * le + rec.theta[1] * es
            le = rec.e_active
            es += rec.e_active
        assert cs.error_sum == es

    def test_replay_reproduces_outputs_bit_for_bit(self):
        params = EcmParams(**ECM_KW)
        model = EcmPlant(params)
        spec = ConstraintSpec(y_bar=[10.0, 12.0, 8.0], gamma=[1.0, 1.0, 500.0])
        cs = ControllerState(grad_clip=0.05)
        traj = run_closed_loop(model, cs, spec, 500, model.initial_state())
        ys, states = replay_open_loop(model, traj.x0, traj.u_seq())
        assert np.array_equal(ys, traj.y_matrix())
        for a, b in zip(states, traj.states):
            assert np.array_equal(a, b)

    def test_output_count_mismatch_rejected(self):
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0, 1.0], gamma=[1.0, 1.0, 1.0])
        with pytest.raises(ConfigurationError):
            run_closed_loop(model, ControllerState(), spec, 5, model.initial_state())

    def test_negative_horizon_rejected(self):
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[1.0, 1.0])
        with pytest.raises(ConfigurationError):
            run_closed_loop(model, ControllerState(), spec, -1, model.initial_state())

    def test_divergence_guard_reports_step(self):
        # unstable gains on an explosive plant must abort loudly
        model = ToyLinearPlant(a=2.0, b=1.0)
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[20.0, 20.0])
        cs = ControllerState(theta=np.array([9.0, 1.0]))
        with pytest.raises(SimulationDiverged) as err:
            run_closed_loop(model, cs, spec, 400, model.initial_state(),
                            guard=1e6)
        assert 0 <= err.value.step <= 400

    def test_stale_controller_rejected(self):
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[1.0, 1.0])
        cs = ControllerState()
        run_closed_loop(model, cs, spec, 3, model.initial_state())
        with pytest.raises(ConfigurationError):
            run_closed_loop(model, cs, spec, 3, model.initial_state())

    def test_optional_hard_clamp_recorded(self):
        model = ToyLinearPlant()
        spec = ConstraintSpec(y_bar=[10.0, 5.0], gamma=[1.0, 1.0])
        cs = ControllerState()
        traj = run_closed_loop(model, cs, spec, 20, model.initial_state(),
                               u_clamp=(0.0, 10.0))
        assert traj.extras["u_clamp"] == (0.0, 10.0)
        assert np.all(traj.u_seq() <= 10.0) and np.all(traj.u_seq() >= 0.0)


class TestValidateMonotonicity:
    def test_identity_output_slope_one(self):
        model = ToyLinearPlant()
        rep = validate_monotonicity(model, [model.initial_state(x) for x in (0.0, 2.0)],
                                    np.linspace(0.0, 10.0, 5))
        assert rep.ok
        assert rep.min_slope[0] == pytest.approx(1.0)
        assert rep.min_slope[1] == pytest.approx(1.0)

    def test_ecm_h2_slope_exactly_one(self):
        model = EcmPlant(EcmParams(**ECM_KW))
        states = [model.initial_state(s) for s in (0.0, 0.4, 0.9)]
        rep = validate_monotonicity(model, states, np.linspace(0.0, 20.0, 7))
        assert rep.ok
        assert rep.min_slope[1] == pytest.approx(1.0, abs=1e-6)

    def test_ecm_h3_slope_matches_symbolic_derivative(self):
        # d h3 / du = b*dt*(v1 + v2) + 2*b*dt*Ro*u, evaluated on the sample
        params = EcmParams(**ECM_KW)
        model = EcmPlant(params)
        rng = np.random.default_rng(5)
        states = [np.array([rng.uniform(0, 2), rng.uniform(0, 2),
                            rng.uniform(0, 1), rng.uniform(0, 8)])
                  for _ in range(6)]
        u_grid = np.linspace(0.0, 15.0, 6)
        bdt = params.b * params.dt
        expected = min(bdt * (x[0] + x[1]) + 2.0 * bdt * params.r_o * u
                       for x in states for u in u_grid)
        rep = validate_monotonicity(model, states, u_grid, delta=1e-7)
        assert rep.min_slope[2] == pytest.approx(expected, rel=1e-3)
        assert rep.ok  # all sampled v1, v2, u are non-negative here

    def test_flags_non_monotone_output(self):
        class Decreasing(ToyLinearPlant):
            def outputs(self, state, u):
                return np.array([u, -u])

            def output(self, state, u, index):
                return u if index == 0 else -u

        rep = validate_monotonicity(Decreasing(), [np.zeros(1)], [0.0, 1.0])
        assert rep.flagged == [2]
        assert not rep.ok

    def test_empty_samples_rejected(self):
        model = ToyLinearPlant()
        with pytest.raises(ConfigurationError):
            validate_monotonicity(model, [], [0.0])
