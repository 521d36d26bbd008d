import os
import math
import logging

import numpy as np
import pytest

from nigrid.exceptions import ConstructionError, DimensionError
from nigrid.grid import (BatteryParams, Bus, GridScenario, InitialDeviation, Line, apply_parameter,
                         assemble_grid_system, battery_command_series, battery_power_command, branch_flow,
                         compute_equilibrium, cycle_residuals, domain_membership, domain_predicate,
                         equilibrium_residual, flip_line, initial_state, line_flow_deviation,
                         make_battery_controller, make_line_controller, make_node_plant, swing_rhs)
from nigrid.integrators import rk4_step
from nigrid.network import InterconnectedSystem
from nigrid.scenario import load_scenario
from nigrid.simulation import integrate
from nigrid.systems import evaluate

logging.basicConfig(format='%(message)s', level=logging.CRITICAL)

PSI = math.pi / 6


def _rf(fn):
    return os.path.join(os.path.dirname(__file__), fn)


def _scenario(name):
    scenario, _ = load_scenario(_rf(f'scenarios/{name}.json'))
    return scenario


def _two_bus(**kw):
    return GridScenario((Bus(1, M=1.0, D=1.0), Bus(2, M=1.0, D=1.0)),
                        (Line(1, 2, X=0.5, psi_bar=PSI),), **kw)


# *************************
# Steady state
# *************************

def test_branch_flow_example():
    assert branch_flow(1.05, 0.98, 0.4, 0.3) == pytest.approx(2.5725 * math.sin(0.3))
    assert branch_flow(1.0, 1.0, 0.5, 0.0) == 0.0


@pytest.mark.parametrize('a', [0.1, -0.7, 2.5])
def test_branch_flow_antisymmetric(a):
    assert branch_flow(1.1, 0.9, 0.3, -a) == pytest.approx(-branch_flow(1.1, 0.9, 0.3, a))


def test_branch_flow_rejects_reactance():
    with pytest.raises(DimensionError):
        branch_flow(1.0, 1.0, 0.0, 0.1)


def test_equilibrium_triangle():
    scenario = compute_equilibrium(_scenario('triangle'))
    s1, s2 = 2.0 * math.sin(0.1), 2.0 * math.sin(0.2)
    P_M = [b.P_M for b in scenario.buses]
    np.testing.assert_allclose(P_M, [0.5 + s1 + s2, 0.0, -s1 - s2], atol=1e-15)
    assert sum(P_M) == pytest.approx(sum(b.P_L for b in scenario.buses))
    np.testing.assert_allclose(equilibrium_residual(scenario), 0.0, atol=1e-14)


def test_equilibrium_with_storage_baseline():
    buses = (Bus(1, M=1.0, D=1.0, P_L=0.2, P_ST=0.05), Bus(2, M=1.0, D=1.0, P_L=0.1))
    scenario = compute_equilibrium(GridScenario(buses, (Line(1, 2, X=0.5, psi_bar=PSI),)))
    assert scenario.buses[0].P_M == pytest.approx(0.2 - 0.05 + 1.0)
    assert scenario.buses[1].P_M == pytest.approx(0.1 - 1.0)


def test_equilibrium_residual_needs_p_m():
    with pytest.raises(ConstructionError):
        equilibrium_residual(_scenario('triangle'))


def test_cycle_residuals():
    assert cycle_residuals(_two_bus()) == []
    (cycle, residual), = cycle_residuals(_scenario('triangle'))
    assert sorted(cycle) == [1, 2, 3]
    assert residual == pytest.approx(0.0, abs=1e-15)
    (_, residual), = cycle_residuals(_scenario('ring5'))
    assert residual == pytest.approx(0.0, abs=1e-15)
    (_, residual), = cycle_residuals(apply_parameter(_scenario('triangle'), 'lines.3.psi_bar', 0.3))
    assert abs(residual) == pytest.approx(0.1)


# *************************
# Scenario construction
# *************************

def test_p_max_derived():
    buses = (Bus(1, M=1.0, D=1.0, E0=1.1), Bus(2, M=1.0, D=1.0, E0=0.9))
    scenario = GridScenario(buses, (Line(1, 2, X=0.5, psi_bar=0.1),))
    assert scenario.lines[0].p_max == pytest.approx(1.98)
    np.testing.assert_allclose(scenario.p_max, [1.98])


def test_scenario_defaults():
    scenario = _two_bus()
    assert scenario.initial == (InitialDeviation(), InitialDeviation())
    assert scenario.battery_map == {}
    assert scenario.line_ends(0) == (0, 1)
    assert scenario.bus_position(2) == 1


def test_bus_ids_need_not_be_positions():
    buses = (Bus(10, M=1.0, D=1.0), Bus(4, M=1.0, D=1.0), Bus(7, M=1.0, D=1.0))
    scenario = GridScenario(buses, (Line(10, 7, X=0.5, psi_bar=0.1), Line(7, 4, X=0.5, psi_bar=0.1)))
    assert scenario.topology.edges == ((0, 2), (2, 1))
    assert scenario.bus_position(7) == 2


@pytest.mark.parametrize('buses, lines, kw', [
    ((Bus(1, M=1.0, D=1.0), Bus(1, M=1.0, D=1.0)), (Line(1, 2, X=0.5, psi_bar=0.0),), {}),
    ((Bus(1, M=1.0, D=1.0), Bus(2, M=1.0, D=1.0)), (Line(1, 3, X=0.5, psi_bar=0.0),), {}),
    ((Bus(1, M=1.0, D=1.0), Bus(2, M=1.0, D=1.0), Bus(3, M=1.0, D=1.0)), (Line(1, 2, X=0.5, psi_bar=0.0),), {}),
    ((Bus(1, M=1.0, D=1.0), Bus(2, M=1.0, D=1.0)), (Line(1, 2, X=0.5, psi_bar=0.0),),
     {'initial': (InitialDeviation(),)}),
    ((Bus(1, M=1.0, D=1.0), Bus(2, M=1.0, D=1.0)), (Line(1, 2, X=0.5, psi_bar=0.0),),
     {'battery_edges': ((1, BatteryParams(1.0, 1.0, 2.0)),)}),
    ((Bus(1, M=1.0, D=1.0), Bus(2, M=1.0, D=1.0)), (Line(1, 2, X=0.5, psi_bar=0.0),),
     {'battery_edges': ((0, BatteryParams(1.0, 1.0, 2.0)), (0, BatteryParams(1.0, 1.0, 3.0)))}),
])
def test_scenario_rejected(buses, lines, kw):
    with pytest.raises(ConstructionError):
        GridScenario(buses, lines, **kw)


def test_disconnected_message_names_buses():
    buses = tuple(Bus(i, M=1.0, D=1.0) for i in (1, 2, 3))
    with pytest.raises(ConstructionError, match=r'\[3\]'):
        GridScenario(buses, (Line(1, 2, X=0.5, psi_bar=0.0),))


@pytest.mark.parametrize('make', [
    lambda: Bus(1, M=0.0, D=1.0),
    lambda: Bus(1, M=1.0, D=-0.1),
    lambda: Bus(1, M=1.0, D=1.0, E0=0.0),
    lambda: Line(1, 1, X=0.5, psi_bar=0.0),
    lambda: Line(1, 2, X=-0.5, psi_bar=0.0),
    lambda: BatteryParams(0.0, 1.0, 2.0),
    lambda: BatteryParams(1.0, 1.0, 1.0),
    lambda: BatteryParams(1.0, 0.0, 1.0),
])
def test_component_rejected(make):
    with pytest.raises(ConstructionError):
        make()


def test_with_initial():
    scenario = _two_bus().with_initial([0.1, -0.1], [0.0, 0.2])
    X_p, X_c = initial_state(scenario)
    np.testing.assert_array_equal(X_p, [0.0, 0.1, 0.2, -0.1])
    assert X_c.shape == (0,)


# *************************
# Subsystems
# *************************

def test_node_plant():
    plant = make_node_plant(Bus(1, M=2.0, D=0.5))
    x_dot, y = evaluate(plant, [1.0, 0.0], [0.4])
    np.testing.assert_allclose(x_dot, [-0.05, 1.0])
    np.testing.assert_allclose(y, [0.0])
    assert plant.osni_epsilon == 0.5
    assert plant.storage_value(np.array([1.0, 0.3])) == pytest.approx(1.0)
    assert make_node_plant(Bus(2, M=1.0, D=0.0)).osni_epsilon == 0.0


@pytest.mark.parametrize('u, expected', [
    (0.0, 0.0),
    (PSI, -0.7320508),
    (-2.0 * PSI, 2.0),
])
def test_line_controller(u, expected):
    line = make_line_controller(Line(1, 2, X=0.5, psi_bar=PSI, p_max=2.0))
    _, y = evaluate(line, [], [u])
    assert y[0] == pytest.approx(expected, abs=1e-7)


def test_line_controller_needs_p_max():
    with pytest.raises(ConstructionError):
        make_line_controller(Line(1, 2, X=0.5, psi_bar=PSI))


def test_line_controller_is_passive_inside_d1():
    # u y <= 0 on the whole D1 interval
    line = make_line_controller(Line(1, 2, X=0.5, psi_bar=PSI, p_max=2.0))
    u = np.linspace(-math.pi - 2.0 * PSI, math.pi - 2.0 * PSI, 1001)[1:-1]
    y = line.output_input(u[:, None])[:, 0]
    assert np.all(u * y <= 1e-15)


def test_battery_controller():
    battery = make_battery_controller(BatteryParams(tau=1.0, K1=1.0, K2=2.0))
    x_dot, y = evaluate(battery, [0.5], [0.2])
    np.testing.assert_allclose(x_dot, [-0.3])
    np.testing.assert_allclose(y, [0.1])
    assert battery.storage_value(np.array([0.5])) == pytest.approx(0.125)
    assert battery.gamma == 1.0
    assert make_battery_controller((2.0, 1.0, 3.0)).gamma == 2.0


def test_battery_power_command():
    line = Line(1, 2, X=0.5, psi_bar=PSI, p_max=2.0)
    params = BatteryParams(1.0, 1.0, 2.0)
    p_i = battery_power_command(1, 0.5, 0.2, line, params)
    expected = 0.5 - 0.4 - 2.0 * (0.5 - math.sin(0.2 + PSI))
    assert p_i == pytest.approx(expected)
    assert battery_power_command(-1, 0.5, 0.2, line, params) == pytest.approx(-expected)
    with pytest.raises(DimensionError):
        battery_power_command(0, 0.5, 0.2, line, params)


def test_battery_commands_sum_to_zero():
    rng = np.random.default_rng(5)
    line = Line(1, 2, X=0.5, psi_bar=0.3, p_max=2.0)
    params = BatteryParams(1.0, 1.0, 2.0)
    x = rng.normal(size=50)
    u = rng.normal(size=50)
    total = battery_power_command(1, x, u, line, params) + battery_power_command(-1, x, u, line, params)
    np.testing.assert_array_equal(total, 0.0)


def test_line_flow_deviation():
    scenario = _two_bus()
    np.testing.assert_allclose(line_flow_deviation(scenario, [0.2]), [2.0 * (math.sin(0.2 + PSI) - 0.5)])
    assert line_flow_deviation(scenario, np.zeros((4, 1))).shape == (4, 1)


# *************************
# Domains
# *************************

def test_domain_inside():
    dm = domain_membership(_two_bus(), [0.3, 0.0])
    assert dm.in_d1 and dm.in_d2 and dm.inside
    assert dm.d2_sum == pytest.approx(2.0 * (math.cos(PSI) - 0.3 * 0.5 - math.cos(0.3 + PSI)))


def test_domain_origin():
    dm = domain_membership(_two_bus(), [0.0, 0.0])
    assert dm.inside
    assert dm.d2_sum == 0.0


def test_domain_d1_violation():
    dm = domain_membership(_two_bus(), [3.0, 0.0])
    assert not dm.in_d1
    (line, psi_dev, lo, hi), = dm.d1_violations
    assert line == 1
    assert psi_dev == 3.0
    assert lo == pytest.approx(-math.pi - 2.0 * PSI)
    assert hi == pytest.approx(math.pi - 2.0 * PSI)


def test_domain_excluded_edge():
    dm = domain_membership(_two_bus(), [3.0, 0.0], excluded_edge=0)
    assert dm.in_d1
    assert dm.d2_sum == 0.0
    assert not dm.in_d2


def test_domain_predicate_reads_angles():
    pred = domain_predicate(_two_bus())
    assert pred(np.array([5.0, 0.3, -5.0, 0.0]))
    assert not pred(np.array([0.0, 3.0, 0.0, 0.0]))


# *************************
# Assembly
# *************************

def test_assemble_two_bus():
    scenario = _two_bus().with_initial([0.2, 0.0])
    sys = assemble_grid_system(scenario)
    s = sys.coupled_rhs(*initial_state(scenario))
    flow = 2.0 * (0.5 - math.sin(0.2 + PSI))
    np.testing.assert_allclose(s.xp_dot, [flow, 0.0, -flow, 0.0])
    np.testing.assert_allclose(s.u_c, [0.2])
    assert sys.edge_controllers[0].name == 'line 1-2'
    assert sys.node_plants[1].name == 'bus 2'


def test_assemble_battery_triangle():
    scenario = _scenario('triangle_battery')
    sys = assemble_grid_system(scenario)
    assert sys.plant_state_dim == 6
    assert sys.controller_state_dim == 1
    assert [c.state_dim for c in sys.edge_controllers] == [0, 0, 1]
    assert sys.edge_controllers[2].name == 'battery 1-3'
    assert scenario.battery_map[2].K2 == 2.0


@pytest.mark.parametrize('name', ['two_bus', 'triangle', 'triangle_battery', 'ring5'])
def test_vectorised_rhs_matches_generic(name):
    scenario = _scenario(name)
    sys = assemble_grid_system(scenario)
    rng = np.random.default_rng(11)
    for _ in range(20):
        X_p = rng.uniform(-1.0, 1.0, size=sys.plant_state_dim)
        X_c = rng.uniform(-1.0, 1.0, size=sys.controller_state_dim)
        fast = sys.coupled_rhs(X_p, X_c)
        slow = InterconnectedSystem.coupled_rhs(sys, X_p, X_c)
        for a, b in zip(fast, slow):
            np.testing.assert_allclose(a, b, atol=1e-12)


def _swing_run(scenario, horizon, dt):
    N = scenario.bus_count
    X_p, X_c = initial_state(scenario)
    z = np.concatenate([X_p[0::2], X_p[1::2], X_c])
    rhs = swing_rhs(scenario)
    for k in range(int(round(horizon / dt))):
        z = rk4_step(rhs, k * dt, z, dt)
    return z[:N], z[N:2 * N], z[2 * N:]


def _compare_swing(name, horizon):
    scenario = _scenario(name)
    traj = integrate(assemble_grid_system(scenario), initial_state(scenario), horizon, 1e-3)
    v, delta, xc = _swing_run(scenario, horizon, 1e-3)
    X_p, X_c = traj.final_state()
    np.testing.assert_allclose(X_p[0::2], v, atol=1e-9)
    np.testing.assert_allclose(X_p[1::2], delta, atol=1e-9)
    np.testing.assert_allclose(X_c, xc, atol=1e-9)


@pytest.mark.parametrize('name', ['triangle', 'triangle_battery'])
def test_networked_form_matches_swing_equations(name):
    _compare_swing(name, 2.0)


@pytest.mark.slow
@pytest.mark.parametrize('name', ['two_bus', 'triangle', 'triangle_battery', 'ring5'])
def test_networked_form_matches_swing_equations_long(name):
    _compare_swing(name, 10.0)


@pytest.mark.parametrize('name, l', [('triangle', 0), ('triangle_battery', 2), ('triangle_battery', 1)])
def test_flip_line_same_physics(name, l):
    scenario = _scenario(name)
    flipped = flip_line(scenario, l)
    assert flipped.lines[l].psi_bar == -scenario.lines[l].psi_bar
    a = integrate(assemble_grid_system(scenario), initial_state(scenario), 1.0, 1e-3)
    b = integrate(assemble_grid_system(flipped), initial_state(flipped), 1.0, 1e-3)
    np.testing.assert_allclose(a.x_p, b.x_p, atol=1e-12)
    sign = -1.0 if l in scenario.battery_map else 1.0
    np.testing.assert_allclose(a.x_c, sign * b.x_c, atol=1e-12)


def test_battery_command_series():
    scenario = _scenario('triangle_battery')
    traj = integrate(assemble_grid_system(scenario), initial_state(scenario), 0.5, 1e-3)
    commands = battery_command_series(scenario, traj)
    assert list(commands) == [2]
    p_i, p_j = commands[2]
    assert p_i.shape == (traj.samples,)
    np.testing.assert_array_equal(p_i + p_j, 0.0)
    assert p_i[0] == pytest.approx(-2.0 * (math.sin(0.2) - math.sin(0.3 + 0.2)) - 2.0 * 0.3)


# *************************
# Parameter addressing
# *************************

def test_apply_parameter_fields():
    scenario = compute_equilibrium(_scenario('triangle_battery'))
    s = apply_parameter(scenario, 'buses.2.D', 0.3)
    assert s.buses[1].D == 0.3
    assert all(b.P_M is None for b in s.buses)
    assert apply_parameter(scenario, 'lines.1.psi_bar', 0.05).lines[0].psi_bar == 0.05
    assert apply_parameter(scenario, 'lines.2.X', 0.25).lines[1].p_max == pytest.approx(4.0)
    assert apply_parameter(scenario, 'initial.3.freq_dev', 0.2).initial[2].freq_dev == 0.2
    assert apply_parameter(scenario, 'battery_edges.1.K2', 3.0).battery_map[2].K2 == 3.0
    assert apply_parameter(scenario, 'battery_line', 1).battery_map[0].K2 == 2.0


@pytest.mark.parametrize('target, value', [
    ('buses.9.D', 0.1),
    ('buses.1.P_M', 0.1),
    ('lines.4.X', 0.1),
    ('lines.0.X', 0.1),
    ('lines.one.X', 0.1),
    ('battery_edges.2.K1', 0.5),
    ('battery_line', 2.5),
    ('battery_line', 4),
    ('omega0', 1.0),
    ('initial.1.delta', 0.1),
])
def test_apply_parameter_rejected(target, value):
    with pytest.raises(DimensionError):
        apply_parameter(_scenario('triangle_battery'), target, value)


def test_apply_parameter_battery_line_needs_one_battery():
    with pytest.raises(DimensionError):
        apply_parameter(_scenario('triangle'), 'battery_line', 1)


def test_apply_parameter_invalid_value():
    with pytest.raises(ConstructionError):
        apply_parameter(_scenario('triangle'), 'buses.1.M', -1.0)
