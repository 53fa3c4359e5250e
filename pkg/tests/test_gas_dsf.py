import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from qbrown.errors import DomainError
from qbrown.gas_dsf import (GasSpec, ModeGrid, Statistics, aligned_energy_edges,
                            cross_section, dsf_discrete_oracle, evaluate_dsf,
                            evaluate_dsf_brownian, mean_energy_excess)
from qbrown.kernel import KernelSpec


def mb_reference(gas, q, E):
    """Maxwell-Boltzmann structure factor written out directly."""
    pref = 2 * np.pi * gas.m ** 2 / ((2 * np.pi * gas.hbar) ** 3 * gas.n * gas.beta * q)
    return gas.z * pref * np.exp(-gas.beta * (2 * gas.m * E + q ** 2) ** 2 / (8 * gas.m * q ** 2))


def quantum_reference(gas, q, E):
    """Log form with the explicit 1/(e^{beta E} - 1); only for moderate E != 0."""
    s = gas.sign
    pref = 2 * np.pi * gas.m ** 2 / ((2 * np.pi * gas.hbar) ** 3 * gas.n * gas.beta * q)
    ap = gas.beta * (2 * gas.m * E + q ** 2) ** 2 / (8 * gas.m * q ** 2)
    am = ap - gas.beta * E
    num = np.log((1 - s * gas.z * np.exp(-ap)) / (1 - s * gas.z * np.exp(-am)))
    return pref * s * num / np.expm1(gas.beta * E)


def test_mb_example_at_zero_exponent():
    gas = GasSpec("MaxwellBoltzmann", m=1, beta=1, z=0.3, n=1)
    np.testing.assert_allclose(evaluate_dsf(gas, 1.0, -0.5), 0.3 / (2 * np.pi) ** 2, rtol=1e-15)


@pytest.mark.parametrize("stat", ["Bose", "Fermi"])
def test_quantum_forms_match_textbook_expression(stat):
    gas = GasSpec(stat, m=1.3, beta=0.8, z=0.6, n=2.0)
    q = np.array([0.4, 1.0, 2.5])[:, None]
    E = np.array([-2.0, -0.3, 0.25, 1.7])[None, :]
    ref = quantum_reference(gas, q, E)
    # the naive log of a ratio near 1 loses digits in the tails
    for model in (f"{stat}Log", f"{stat}Arth"):
        np.testing.assert_allclose(evaluate_dsf(gas, q, E, model), ref, rtol=1e-9)


def test_bose_log_equals_arth_example():
    gas = GasSpec("Bose", m=1, beta=1, z=0.5, n=1)
    a = evaluate_dsf(gas, 1.0, 0.25, "BoseLog")
    b = evaluate_dsf(gas, 1.0, 0.25, "BoseArth")
    np.testing.assert_allclose(a, b, rtol=1e-12)


@pytest.mark.parametrize("stat", ["Bose", "Fermi"])
def test_removable_point_at_zero_energy(stat):
    gas = GasSpec(stat, z=0.7 if stat == "Bose" else 2.0)
    eps = np.array([-1e-9, 0.0, 1e-9])
    vals = evaluate_dsf(gas, 1.1, eps)
    np.testing.assert_allclose(vals, vals[1], rtol=1e-8)


@pytest.mark.parametrize("stat", ["MaxwellBoltzmann", "Bose", "Fermi"])
def test_large_energy_never_nan(stat):
    gas = GasSpec(stat, z=0.9)
    E = np.array([-1e5, -800.0, 800.0, 1e5])
    vals = evaluate_dsf(gas, 0.5, E)
    assert np.all(np.isfinite(vals)) and np.all(vals >= 0)


def test_classical_slope_is_first_order():
    q, E = 1.2, 0.4
    dev = {}
    for z in (1e-6, 2e-6):
        mb = evaluate_dsf(GasSpec("MaxwellBoltzmann", z=z), q, E)
        dev[z] = evaluate_dsf(GasSpec("Bose", z=z), q, E) / mb - 1
    np.testing.assert_allclose(dev[2e-6] / dev[1e-6], 2.0, rtol=1e-4)
    assert dev[1e-6] > 0


def test_fermi_suppressed_bose_enhanced_at_peak():
    q, E = 1.0, -0.5
    mb = evaluate_dsf(GasSpec("MaxwellBoltzmann", z=0.5), q, E)
    assert evaluate_dsf(GasSpec("Bose", z=0.5), q, E) > mb > evaluate_dsf(GasSpec("Fermi", z=0.5), q, E)


def test_domain_errors():
    with pytest.raises(DomainError) as exc:
        GasSpec("Bose", z=1.0)
    assert exc.value.field == "z"
    with pytest.raises(DomainError) as exc:
        GasSpec("Fermi", m=-1)
    assert exc.value.field == "m"
    gas = GasSpec("MaxwellBoltzmann")
    with pytest.raises(DomainError):
        evaluate_dsf(gas, 0.0, 1.0)
    with pytest.raises(DomainError):
        evaluate_dsf(gas, 1.0, 1.0, "BoseLog")
    with pytest.raises(ValueError):
        evaluate_dsf(gas, 1.0, 1.0, "NoSuchModel")


def test_gasspec_roundtrip():
    gas = GasSpec("Fermi", m=2.0, beta=0.5, z=3.0, n=0.1, hbar=1.5)
    assert GasSpec.from_dict(gas.to_dict()) == gas
    assert gas.statistics is Statistics.FERMI


gas_params = st.fixed_dictionaries({
    "m": st.floats(0.2, 5), "beta": st.floats(0.2, 5), "n": st.floats(0.2, 5),
    "z": st.floats(1e-6, 0.99), "stat": st.sampled_from(["MaxwellBoltzmann", "Bose", "Fermi"]),
    "q": st.floats(0.05, 10), "x": st.floats(-6, 6),
})


@settings(max_examples=200, deadline=None)
@given(gas_params)
def test_detailed_balance_and_positivity(p):
    gas = GasSpec(p["stat"], m=p["m"], beta=p["beta"], z=p["z"], n=p["n"])
    q = p["q"]
    E = (p["x"] * np.sqrt(8 * gas.m / gas.beta) * q - q ** 2) / (2 * gas.m)
    # S(q, -E) carries the exponent A_- = (x - q sqrt(beta/2m))^2; keep it representable
    assume((p["x"] - q * np.sqrt(gas.beta / (2 * gas.m))) ** 2 < 600)
    s = evaluate_dsf(gas, q, E)
    assert s >= 0
    np.testing.assert_allclose(s, np.exp(-gas.beta * E) * evaluate_dsf(gas, q, -E), rtol=1e-10)


def test_mb_form_matches_reference():
    gas = GasSpec("MaxwellBoltzmann", m=0.7, beta=2.0, z=0.2, n=3.0, hbar=0.5)
    q, E = np.meshgrid(np.linspace(0.2, 3, 7), np.linspace(-2, 2, 9))
    np.testing.assert_allclose(evaluate_dsf(gas, q, E), mb_reference(gas, q, E), rtol=1e-14)


def test_mean_energy_excess_identity():
    rng = np.random.default_rng(1)
    gas = GasSpec("MaxwellBoltzmann", m=1.5, beta=0.7, z=0.3)
    q = rng.uniform(0.5, 2, 50)
    E1, E2 = rng.uniform(-1, 1, (2, 50))
    lhs = evaluate_dsf(gas, q, 0.5 * (E1 + E2)) / np.sqrt(evaluate_dsf(gas, q, E1) * evaluate_dsf(gas, q, E2))
    np.testing.assert_allclose(lhs, mean_energy_excess(gas, q, E1, E2), rtol=1e-12)


def test_brownian_recoil_ratio_at_rest():
    gas = GasSpec("MaxwellBoltzmann", m=1.0, beta=1.3, z=0.4)
    M = 7.0
    q = np.array([[0.3, 0.4, 1.2]])
    p = np.zeros((1, 3))
    ratio = evaluate_dsf_brownian(gas, M, q, p) / evaluate_dsf_brownian(gas, M, q, p, recoil=False)
    alpha = gas.m / M
    np.testing.assert_allclose(ratio, np.exp(-gas.beta / (8 * gas.m) * 2 * alpha * np.sum(q ** 2)), rtol=1e-14)


def test_brownian_vector_form_matches_energy_form():
    gas = GasSpec("MaxwellBoltzmann", m=1.0, beta=0.9, z=0.4)
    M = 5.0
    rng = np.random.default_rng(2)
    q, p = rng.normal(size=(2, 20, 3))
    E = (np.sum(q * q, -1) / 2 + np.sum(q * p, -1)) / M
    np.testing.assert_allclose(evaluate_dsf_brownian(gas, M, q, p),
                               evaluate_dsf(gas, np.linalg.norm(q, axis=-1), E, "BrownianLimitMB"),
                               rtol=1e-13)


def test_brownian_geometric_mean_exact():
    gas = GasSpec("MaxwellBoltzmann", z=0.2)
    rng = np.random.default_rng(3)
    q = rng.uniform(0.1, 3, 100)
    E1, E2 = rng.uniform(-5, 5, (2, 100))
    S = lambda E: evaluate_dsf(gas, q, E, "BrownianLimitMB")
    np.testing.assert_allclose(S(0.5 * (E1 + E2)), np.sqrt(S(E1) * S(E2)), rtol=1e-13)


def test_oracle_empty_gas_is_zero():
    gas = GasSpec("Bose", z=0.0)
    grid = ModeGrid(16, 0.5)
    hist = dsf_discrete_oracle(gas, grid, [0.5, 0, 0], np.linspace(-3, 3, 13))
    assert np.all(hist == 0)


def test_oracle_rejects_forward_and_offgrid():
    gas = GasSpec("MaxwellBoltzmann")
    grid = ModeGrid(16, 0.5)
    with pytest.raises(DomainError):
        dsf_discrete_oracle(gas, grid, [0, 0, 0], np.linspace(-1, 1, 3))
    with pytest.raises(DomainError):
        dsf_discrete_oracle(gas, grid, [0.3, 0, 0], np.linspace(-1, 1, 3))


@pytest.mark.parametrize("stat,z", [("MaxwellBoltzmann", 0.4), ("Bose", 0.5), ("Fermi", 1.5)])
def test_oracle_converges_to_closed_form(stat, z):
    gas = GasSpec(stat, z=z)
    grid = ModeGrid(48, 12.0 / 48)
    q = np.array([3, 2, 1]) * grid.spacing
    edges = aligned_energy_edges(gas, grid, q, -6, 6, levels_per_bin=3)
    hist = dsf_discrete_oracle(gas, grid, q, edges)
    mass = hist * np.diff(edges)
    heavy = mass > 0.01 * mass.sum()
    centres = 0.5 * (edges[1:] + edges[:-1])
    ref = evaluate_dsf(gas, np.linalg.norm(q), centres)
    np.testing.assert_allclose(hist[heavy], ref[heavy], rtol=0.05)


def test_oracle_total_weight_is_mode_sum():
    # integrating the histogram returns the occupation-weighted mode count
    gas = GasSpec("MaxwellBoltzmann", z=0.3)
    grid = ModeGrid(20, 0.6)
    q = np.array([0.6, 0, 0])
    edges = np.linspace(-50, 50, 11)
    total = np.sum(dsf_discrete_oracle(gas, grid, q, edges) * np.diff(edges))
    p = grid.momenta().reshape(-1, 3)
    expected = gas.occupation(np.sum(p * p, -1)).sum() * grid.spacing ** 3 / (2 * np.pi) ** 3
    np.testing.assert_allclose(total, expected, rtol=1e-13)


def test_cross_section():
    gas = GasSpec("MaxwellBoltzmann", z=0.3)
    M = 4.0
    p_in = np.array([1.0, 0.0, 0.0])
    p_out = np.array([0.0, 1.0, 0.0])
    zero = cross_section(gas, KernelSpec.contact(0.0), p_in, p_out, M)
    assert zero == 0
    k = KernelSpec.gaussian(0.7, 1.1)
    val = cross_section(gas, k, p_in, p_out, M)
    q = np.sqrt(2.0)
    pref = (2 * np.pi) ** 6 * (M / (2 * np.pi)) ** 2
    np.testing.assert_allclose(val, pref * k.t2(q) * evaluate_dsf(gas, q, 0.0), rtol=1e-14)
    p_out2 = np.array([2.0, 0.0, 0.0])
    E = (4.0 - 1.0) / (2 * M)
    np.testing.assert_allclose(cross_section(gas, k, p_in, p_out2, M),
                               pref * 2.0 * k.t2(1.0) * evaluate_dsf(gas, 1.0, E), rtol=1e-14)
    with pytest.raises(DomainError):
        cross_section(gas, k, np.zeros(3), p_out, M)
