import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from restenosim.mesh import element_geometry, structured_rectangle
from restenosim.numerics import lumped
from restenosim.transport import (FieldState, TransportError, TransportOptions, TransportParams,
                                  assemble_operators, boundary_load, element_matrices, step_ecm,
                                  step_pdgf, step_smc, total_amount, transport_step)

P0 = TransportParams()
MASS_UNIT_SQUARE = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]]) / 36.0


def uniform(mesh, c, e, s):
    n = mesh.n_nodes
    return FieldState(np.full(n, c), np.full(n, e), np.full(n, s))


def unit_square():
    return structured_rectangle(1, 1, 1, 1, "plane")


def test_p_block_is_mass_matrix():
    m = unit_square()
    params = TransportParams(alpha=1.0)
    blocks = element_matrices(m, 0, uniform(m, 0.0, 7e-9, 1.0), params)
    np.testing.assert_allclose(blocks["P"], MASS_UNIT_SQUARE, atol=1e-15)
    np.testing.assert_allclose(blocks["M"], MASS_UNIT_SQUARE, atol=1e-15)


def test_uniform_ecm_gives_no_chemotaxis():
    m = structured_rectangle(2, 1, 4, 2, "axisym", inner_radius=1.0)
    blocks = element_matrices(m, 3, uniform(m, 1e-11, 7e-9, 3e6), P0)
    assert np.abs(blocks["K"]).max() <= 1e-12 * np.abs(blocks["L"]).max() * 3e6


def test_no_pdgf_blocks():
    m = unit_square()
    st_ = uniform(m, 0.0, 7e-9, 3.16e6)
    blocks = element_matrices(m, 0, st_, P0)
    assert np.abs(blocks["Q"]).max() == 0.0
    np.testing.assert_allclose(blocks["T"], P0.beta * 3.16e6 / P0.rho_E_th * MASS_UNIT_SQUARE,
                               rtol=1e-14)
    np.testing.assert_allclose(blocks["R"], P0.beta * 3.16e6 * np.full(4, 0.25), rtol=1e-14)


def test_stiffness_row_sums_vanish():
    m = structured_rectangle(3, 1, 6, 3, "axisym", inner_radius=0.5, etype="tri")
    ops = assemble_operators(m, uniform(m, 1e-11, 7e-9, 3e6), P0)
    np.testing.assert_allclose(lumped(ops["L"]), 0.0, atol=1e-14 * abs(ops["L"]).max())


def test_chemotaxis_columns_sum_to_zero():
    m = structured_rectangle(3, 1, 6, 3, "plane")
    x = m.node_coords
    st_ = FieldState(1e-11 * np.exp(-x[:, 0]), 7e-9 * (0.5 + 0.1 * x[:, 0] * x[:, 1]),
                     np.full(m.n_nodes, 3e6))
    K = assemble_operators(m, st_, P0)["K"]
    assert abs(K).max() > 0
    np.testing.assert_allclose(np.asarray(K.sum(axis=0)).ravel(), 0.0, atol=1e-12 * abs(K).max())


# one-element uniform problems against the scalar recurrences

@pytest.mark.parametrize("stabilization", ["fct", "none"])
def test_pdgf_halves(stabilization):
    m = unit_square()
    rho_S = 2.0e6
    dt = 0.5
    params = TransportParams(alpha=1.0 / (rho_S * dt))
    c1 = step_pdgf(m, uniform(m, 3e-12, 7e-9, rho_S), params, dt,
                   options=TransportOptions(stabilization=stabilization))
    np.testing.assert_allclose(c1, 1.5e-12, rtol=1e-12)


def test_zero_pdgf_stays_zero():
    m = unit_square()
    assert np.all(step_pdgf(m, uniform(m, 0.0, 7e-9, 3e6), P0, 0.1) == 0.0)


def test_ecm_fixed_point():
    m = unit_square()
    e = step_ecm(m, uniform(m, 0.0, P0.rho_E_th, 3e6), P0, 0.1)
    np.testing.assert_allclose(e, P0.rho_E_th, rtol=1e-15)


@settings(max_examples=40, deadline=None)
@given(rho_E=st.floats(0, 1), rho_S=st.floats(1e3, 1e7), dt=st.floats(1e-4, 1.0))
def test_ecm_closed_form_without_pdgf(rho_E, rho_S, dt):
    m = unit_square()
    e0 = rho_E * P0.rho_E_th
    e1 = step_ecm(m, uniform(m, 0.0, e0, rho_S), P0, dt)
    b = P0.beta * rho_S
    expected = (e0 + dt * b) / (1 + dt * b / P0.rho_E_th)
    np.testing.assert_allclose(e1, expected, rtol=1e-12)
    assert np.all(e1 >= e0 * (1 - 1e-15)) and np.all(e1 <= P0.rho_E_th * (1 + 1e-15))


def test_ecm_degradation_only():
    m = unit_square()
    params = TransportParams(beta=0.0)
    c, e0, dt = 2e-12, 6e-9, 0.3
    e1 = step_ecm(m, uniform(m, c, e0, 3e6), params, dt)
    np.testing.assert_allclose(e1, e0 / (1 + dt * params.gamma * c), rtol=1e-12)


def test_smc_uniform_without_pdgf_unchanged():
    m = unit_square()
    s = step_smc(m, uniform(m, 0.0, 6e-9, 3e6), P0, 0.2)
    np.testing.assert_allclose(s, 3e6, rtol=1e-15)


@pytest.mark.parametrize("stabilization", ["fct", "none"])
def test_smc_proliferation_closed_form(stabilization):
    m = unit_square()
    c, e, dt = 1e-11, 0.5 * P0.rho_E_th, 0.1
    params = TransportParams(kappa=0.1 / (c * (1 - e / P0.rho_E_th) * dt))
    s = step_smc(m, uniform(m, c, e, 3e6), params, dt,
                 options=TransportOptions(stabilization=stabilization))
    np.testing.assert_allclose(s, 3e6 / 0.9, rtol=1e-12)


def test_smc_frozen_without_chemotaxis_or_proliferation():
    m = structured_rectangle(2, 1, 4, 2, "plane")
    x = m.node_coords
    st_ = FieldState(1e-11 * (1 + x[:, 0]), 7e-9 * (0.5 + 0.2 * x[:, 1]), 3e6 * (1 + 0.1 * x[:, 0]))
    s = step_smc(m, st_, TransportParams(chi=0.0, kappa=0.0), 0.1)
    assert np.array_equal(s, st_.rho_S)


def scenario_state(mesh, amp=1e-11):
    x = mesh.node_coords
    c = sum(amp * np.exp(-((x[:, 0] - 1.5) ** 2 + (x[:, 1] - z) ** 2) / 0.08) for z in (1.5, 3.0, 4.5))
    return FieldState(c, np.full(mesh.n_nodes, 7e-9), np.full(mesh.n_nodes, 3.16e6))


def test_pdgf_mass_conserved_without_internalisation():
    m = structured_rectangle(6, 0.8, 30, 4, "axisym", inner_radius=1.5)
    params = TransportParams(alpha=0.0)
    state = scenario_state(m)
    total0 = total_amount(m, state.c_P)
    for _ in range(5):
        state = FieldState(step_pdgf(m, state, params, 0.05), state.rho_E, state.rho_S)
    assert total_amount(m, state.c_P) == pytest.approx(total0, rel=1e-10)


def test_transport_step_order_and_time():
    m = structured_rectangle(6, 0.8, 12, 2, "axisym", inner_radius=1.5)
    s0 = scenario_state(m)
    s1 = transport_step(m, s0, P0, 0.01)
    assert s1.time == pytest.approx(0.01)
    # every update uses step-n coefficients: each field can be recomputed independently
    np.testing.assert_array_equal(s1.rho_E, step_ecm(m, s0, P0, 0.01))
    np.testing.assert_array_equal(s1.rho_S, step_smc(m, s0, P0, 0.01))
    s1.check(P0)


def test_current_configuration_changes_operators():
    m = structured_rectangle(1, 1, 2, 2, "plane")
    s0 = uniform(m, 1e-11, 7e-9, 3e6)
    stretched = m.node_coords * [2.0, 1.0]
    ref = assemble_operators(m, s0, P0)["M"].sum()
    cur = assemble_operators(m, s0, P0, coords=stretched)["M"].sum()
    assert cur == pytest.approx(2.0 * ref)


def test_boundary_influx_total():
    m = structured_rectangle(6, 0.8, 12, 2, "axisym", inner_radius=1.5)
    b = boundary_load(m, "inner", 2.0)
    assert b.sum() == pytest.approx(2.0 * 2 * np.pi * 1.5 * 6, rel=1e-12)
    s0 = uniform(m, 0.0, 7e-9, 3.16e6)
    opts = TransportOptions(pdgf_influx=(("inner", 1e-12),))
    c1 = step_pdgf(m, s0, TransportParams(alpha=0.0), 0.1, options=opts)
    assert total_amount(m, c1) == pytest.approx(0.1 * 1e-12 * 2 * np.pi * 1.5 * 6, rel=1e-10)
    assert c1.min() >= 0.0


def test_invariant_check():
    m = unit_square()
    with pytest.raises(TransportError, match="PDGF"):
        uniform(m, -1.0, 7e-9, 3e6).check(P0)
    with pytest.raises(TransportError, match="SMC"):
        uniform(m, 0.0, 7e-9, -1.0).check(P0)
    with pytest.raises(TransportError, match="ECM"):
        uniform(m, 0.0, 2 * P0.rho_E_th, 3e6).check(P0)
    uniform(m, 0.0, P0.rho_E_th * (1 + 1e-13), 3e6).check(P0)


def test_parameter_validation():
    with pytest.raises(ValueError):
        TransportParams(D_P=-1.0)
    with pytest.raises(ValueError):
        TransportParams(rho_E_th=0.0)
    with pytest.raises(ValueError):
        step_pdgf(unit_square(), uniform(unit_square(), 0, 0, 0), P0, 0.0)


def test_element_measure_matches_geometry():
    m = structured_rectangle(6, 0.8, 6, 2, "axisym", inner_radius=1.5)
    M = assemble_operators(m, uniform(m, 0, 7e-9, 3e6), P0)["M"]
    assert M.sum() == pytest.approx(element_geometry(m).dV.sum(), rel=1e-13)
