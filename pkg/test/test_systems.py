import math
import logging

import numpy as np
import pytest

from nigrid.exceptions import (ConstructionError, DimensionError, DivergenceError, InsufficientDataError,
                               UnsupportedCheckError)
from nigrid.grid import Bus, BatteryParams, Line, make_battery_controller, make_line_controller, make_node_plant
from nigrid.systems import (FAIL, INCONCLUSIVE, PASS, DynamicSystem, SystemTrajectory, aggregate_systems,
                            central_difference, check_channel_independence, check_dissipation,
                            check_steady_state_sign, evaluate, linear_system, simulate_system)

logging.basicConfig(format='%(message)s', level=logging.CRITICAL)


def _plant(M=1.0, D=1.0):
    return make_node_plant(Bus(id=1, M=M, D=D))


def _line(p_max=2.0, psi_bar=math.pi / 6):
    return make_line_controller(Line(from_bus=1, to_bus=2, X=0.5, psi_bar=psi_bar, p_max=p_max))


def _battery(tau=1.0, K1=1.0, K2=2.0):
    return make_battery_controller(BatteryParams(tau, K1, K2))


# *************************
# Construction and evaluation
# *************************

@pytest.mark.parametrize('system', [_plant(), _plant(2.0, 0.5), _line(), _battery()])
def test_zero_is_equilibrium(system):
    xdot, y = evaluate(system, np.zeros(system.state_dim), np.zeros(system.io_dim))
    assert np.all(xdot == 0.0)
    assert np.all(y == 0.0)


def test_evaluate_plant():
    xdot, y = evaluate(_plant(), [1.0, 0.0], [0.0])
    np.testing.assert_allclose(xdot, [-1.0, 1.0])
    np.testing.assert_allclose(y, [0.0])


def test_evaluate_static():
    sys = DynamicSystem(state_dim=0, io_dim=1, g=np.sin, name='sine')
    xdot, y = evaluate(sys, [], [0.2])
    assert xdot.shape == (0,)
    assert y[0] == pytest.approx(math.sin(0.2))


def test_evaluate_rejects_wrong_shapes():
    with pytest.raises(DimensionError):
        evaluate(_plant(), [1.0], [0.0])
    with pytest.raises(DimensionError):
        evaluate(_plant(), [1.0, 0.0], [0.0, 0.0])


@pytest.mark.parametrize('kwargs', [
    dict(state_dim=1, io_dim=1, f=lambda x, u: x + 1.0),
    dict(state_dim=1, io_dim=1, f=lambda x, u: -x, h=lambda x: x + 1.0),
    dict(state_dim=0, io_dim=1, g=lambda u: np.cos(u)),
    dict(state_dim=1, io_dim=1),
    dict(state_dim=0, io_dim=1, h=lambda x: x),
    dict(state_dim=-1, io_dim=1),
    dict(state_dim=1, io_dim=0, f=lambda x, u: -x),
    dict(state_dim=1, io_dim=1, f=lambda x, u: -x, osni_epsilon=-0.1),
])
def test_construction_errors(kwargs):
    with pytest.raises(ConstructionError):
        DynamicSystem(**kwargs)


def test_linear_system_shapes():
    with pytest.raises(ConstructionError):
        linear_system(np.eye(2), np.ones((2, 1)), np.ones((2, 2)))
    sys = linear_system([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0]])
    assert sys.state_dim == 2 and sys.io_dim == 1
    assert sys.linear is not None
    assert not sys.has_storage


def test_storage_value_requires_storage():
    sys = linear_system([[-1.0]], [[1.0]], [[1.0]])
    with pytest.raises(UnsupportedCheckError):
        sys.storage_value(np.zeros(1))


def test_plant_storage():
    assert _plant(2.0, 0.5).storage_value(np.array([2.0, 7.0])) == pytest.approx(4.0)


# *************************
# Channel independence
# *************************

@pytest.mark.parametrize('g, m, verdict', [
    (lambda u: u, 3, PASS),
    (lambda u: np.array([u[0] + u[1], u[1]]), 2, FAIL),
    (np.sin, 2, PASS),
    (None, 4, PASS),
    (lambda u: np.cos(u), 2, FAIL),
])
def test_channel_independence(g, m, verdict):
    rep = check_channel_independence(g, m, sample_count=20, seed=3)
    assert rep.verdict == verdict


def test_channel_independence_witness():
    rep = check_channel_independence(lambda u: np.array([u[0] + u[1], u[1]]), 2, sample_count=5, seed=0)
    s, j, k, change = rep.witness
    assert (j, k) == (1, 0)
    assert change == pytest.approx(1e-3)


def test_channel_independence_deterministic():
    g = lambda u: np.array([u[0] * u[1], u[1]])
    assert check_channel_independence(g, 2, 10, seed=7) == check_channel_independence(g, 2, 10, seed=7)


def test_channel_independence_empty():
    with pytest.raises(DimensionError):
        check_channel_independence(np.sin, 1, 0)


# *************************
# Trajectories and derivatives
# *************************

def test_simulate_system_constant_input():
    traj = simulate_system(_battery(), [0.0], 0.3, horizon=20.0, dt=1e-2)
    assert traj.samples == 2001
    assert traj.dt == pytest.approx(1e-2)
    assert traj.states[-1, 0] == pytest.approx(0.3 * (1.0 - math.exp(-20.0)), abs=1e-9)


def test_simulate_system_shrinks_step():
    traj = simulate_system(_plant(), [0.0, 0.0], lambda t: [math.sin(t)], horizon=1.0, dt=0.3)
    assert traj.times[-1] == pytest.approx(1.0)
    assert traj.samples == 5


def test_simulate_system_divergence():
    sys = DynamicSystem(state_dim=1, io_dim=1, f=lambda x, u: x ** 2)
    with pytest.raises(DivergenceError) as err:
        simulate_system(sys, [1.0], 0.0, horizon=3.0, dt=1e-2)
    assert err.value.time is not None and err.value.time > 0.9


def test_central_difference_orders():
    t = np.linspace(0.0, 1.0, 101)
    dt = t[1] - t[0]
    idx5, d5 = central_difference(np.sin(t), dt, stencil=5)
    idx3, d3 = central_difference(np.sin(t), dt, stencil=3)
    err5 = np.max(np.abs(d5 - np.cos(t[idx5])))
    err3 = np.max(np.abs(d3 - np.cos(t[idx3])))
    assert err5 < 1e-8
    assert err3 < 2e-5
    assert err5 < err3


def test_central_difference_fallback():
    idx, d = central_difference(np.array([0.0, 1.0, 4.0, 9.0]), 1.0)
    np.testing.assert_array_equal(idx, [1, 2])
    np.testing.assert_allclose(d, [2.0, 4.0])
    with pytest.raises(InsufficientDataError):
        central_difference(np.zeros(2), 1.0)


# *************************
# Dissipation
# *************************

def test_plant_dissipation_at_damping():
    plant = _plant()
    traj = simulate_system(plant, [0.5, 0.0], lambda t: [0.8 * math.sin(1.3 * t)], horizon=10.0, dt=1e-3)
    rep = check_dissipation(plant, traj, epsilon=1.0, tolerance=1e-6)
    assert rep.verdict == PASS
    assert rep.passed


def test_plant_dissipation_overclaimed():
    plant = _plant()
    traj = simulate_system(plant, [0.5, 0.0], lambda t: [0.8 * math.sin(1.3 * t)], horizon=10.0, dt=1e-3)
    rep = check_dissipation(plant, traj, epsilon=2.0, tolerance=1e-6)
    assert rep.verdict == FAIL
    assert rep.max_violation > 1e-6
    assert len(rep.violating_times) > 0


def test_zero_trajectory_dissipation():
    plant = _plant()
    traj = SystemTrajectory(np.linspace(0.0, 1.0, 11), np.zeros((11, 2)), np.zeros((11, 1)))
    rep = check_dissipation(plant, traj, epsilon=1.0)
    assert rep.verdict == PASS
    assert rep.max_violation == 0.0


def test_static_controller_dissipation():
    line = _line()
    times = np.linspace(0.0, 2.0, 201)
    traj = SystemTrajectory(times, np.zeros((201, 0)), np.sin(times)[:, None])
    rep = check_dissipation(line, traj, epsilon=0.0)
    assert rep.verdict == PASS
    assert rep.max_violation == 0.0


def test_battery_dissipation():
    bat = _battery()
    traj = simulate_system(bat, [0.0], lambda t: [0.1 * math.sin(t)], horizon=20.0, dt=1e-3)
    assert check_dissipation(bat, traj, epsilon=0.0, tolerance=1e-6).verdict == PASS


def test_dissipation_errors():
    plant = _plant()
    traj = SystemTrajectory(np.linspace(0.0, 1.0, 11), np.zeros((11, 2)), np.zeros((11, 1)))
    with pytest.raises(DimensionError):
        check_dissipation(plant, traj, epsilon=-1.0)
    with pytest.raises(InsufficientDataError):
        check_dissipation(plant, SystemTrajectory(np.zeros(2), np.zeros((2, 2)), np.zeros((2, 1))), 0.0)
    with pytest.raises(UnsupportedCheckError):
        check_dissipation(linear_system([[-1.0]], [[1.0]], [[1.0]]),
                          SystemTrajectory(np.linspace(0, 1, 5), np.zeros((5, 1)), np.zeros((5, 1))), 0.0)


def _random_plant_runs(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        M = rng.uniform(0.5, 5.0)
        D = rng.uniform(0.1, 2.0)
        x0 = rng.uniform(-1.0, 1.0, size=2)
        x0 *= min(1.0, 1.0 / np.linalg.norm(x0))
        a, b = rng.uniform(-1.0, 1.0), rng.uniform(0.1, 3.0)
        yield M, D, x0, a, b


@pytest.mark.parametrize('M, D, x0, a, b', list(_random_plant_runs(10, seed=11)))
def test_random_plant_dissipation(M, D, x0, a, b):
    plant = _plant(M, D)
    traj = simulate_system(plant, x0, lambda t: [a * math.sin(b * t)], horizon=5.0, dt=1e-3)
    assert check_dissipation(plant, traj, epsilon=D, tolerance=1e-6).verdict == PASS


@pytest.mark.slow
@pytest.mark.parametrize('M, D, x0, a, b', list(_random_plant_runs(100, seed=2024)))
def test_random_plant_dissipation_full(M, D, x0, a, b):
    plant = _plant(M, D)
    traj = simulate_system(plant, x0, lambda t: [a * math.sin(b * t)], horizon=10.0, dt=1e-3)
    assert check_dissipation(plant, traj, epsilon=D, tolerance=1e-6).verdict == PASS


@pytest.mark.slow
def test_random_battery_suite():
    rng = np.random.default_rng(29)
    for _ in range(50):
        tau = rng.uniform(0.2, 3.0)
        K1 = rng.uniform(0.1, 3.0)
        K2 = K1 + rng.uniform(0.05, 3.0)
        bat = _battery(tau, K1, K2)
        a, b = rng.uniform(-1.0, 1.0), rng.uniform(0.1, 3.0)
        traj = simulate_system(bat, [0.0], lambda t: [a * math.sin(b * t)], horizon=10.0, dt=1e-3)
        assert check_dissipation(bat, traj, epsilon=0.0, tolerance=1e-6).verdict == PASS
        for u in rng.uniform(-1.0, 1.0, size=20):
            rep = check_steady_state_sign(bat, [u], 'controller', gamma=K2 - K1, settle_time=60.0 * tau)
            assert rep.verdict == PASS


# *************************
# Steady state
# *************************

def test_battery_steady_state():
    rep = check_steady_state_sign(_battery(), [0.3], 'controller', gamma=1.0)
    assert rep.verdict == PASS
    assert rep.settled
    assert rep.y_bar[0] == pytest.approx(-0.3, abs=1e-6)
    assert rep.margin == pytest.approx(1.0, abs=1e-6)


def test_line_steady_state_margin():
    gamma = 2.0 * math.sin(0.1) / 0.1 * (1.0 - 1e-9)
    rep = check_steady_state_sign(_line(psi_bar=0.0), [0.1], 'controller', gamma=gamma)
    assert rep.verdict == PASS
    assert rep.u_dot_y == pytest.approx(-0.2 * math.sin(0.1))


def test_plant_steady_state_zero():
    rep = check_steady_state_sign(_plant(), [0.0], 'plant')
    assert rep.verdict == PASS
    assert rep.y_bar == (0.0,)


def test_plant_steady_state_inconclusive():
    # the angle keeps drifting under a constant power input
    rep = check_steady_state_sign(_plant(), [0.1], 'plant', settle_time=5.0)
    assert rep.verdict == INCONCLUSIVE
    assert not rep.settled
    assert rep.settle_time is None


def test_steady_state_errors():
    with pytest.raises(DimensionError):
        check_steady_state_sign(_battery(), [0.1], 'observer')
    with pytest.raises(UnsupportedCheckError):
        check_steady_state_sign(linear_system([[-1.0]], [[1.0]], [[1.0]]), [0.1], 'plant')


# *************************
# Aggregation
# *************************

def test_aggregate_systems():
    agg = aggregate_systems([_plant(1.0, 0.5), _plant(2.0, 1.5)])
    assert agg.state_dim == 4 and agg.io_dim == 2
    assert agg.osni_epsilon == 0.5
    x = np.array([1.0, 0.0, 2.0, 0.0])
    assert agg.storage_value(x) == pytest.approx(0.5 + 4.0)
    np.testing.assert_allclose(agg.dynamics(x, np.zeros(2)), [-0.5, 1.0, -1.5, 2.0])


def test_aggregate_dissipation():
    agg = aggregate_systems([_plant(1.0, 0.5), _plant(2.0, 1.5), _plant(0.7, 0.3)])
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = rng.uniform(-1.0, 1.0, size=3)
        b = rng.uniform(0.2, 2.0, size=3)
        x0 = rng.uniform(-0.5, 0.5, size=6)
        traj = simulate_system(agg, x0, lambda t: a * np.sin(b * t), horizon=5.0, dt=1e-3)
        assert check_dissipation(agg, traj, epsilon=agg.osni_epsilon).verdict == PASS


def test_aggregate_with_feedthrough():
    agg = aggregate_systems([_battery(), _line()])
    assert agg.state_dim == 1 and agg.io_dim == 2
    y = agg.output(np.array([0.5]), np.array([0.1, 0.2]))
    assert y[0] == pytest.approx(0.5 - 2.0 * 0.1)
    assert y[1] == pytest.approx(2.0 * (0.5 - math.sin(0.2 + math.pi / 6)))
