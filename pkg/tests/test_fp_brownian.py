import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings, strategies as st

from qbrown import fp_brownian as fp
from qbrown import megrid as me
from qbrown.errors import ContractViolation, DomainError
from qbrown.gas_dsf import GasSpec
from qbrown.kernel import KernelSpec


def gaussian_dpp(gas, kernel, dim):
    """Closed form of D_pp for a Gaussian kernel in ``dim`` dimensions."""
    alpha = 1 / (2 * kernel.sigma ** 2) + gas.beta / (8 * gas.m)
    omega = {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}[dim]
    radial = scipy.special.gamma((dim + 1) / 2) / (2 * alpha ** ((dim + 1) / 2))
    return (gas.z * 2 / dim * np.pi ** 2 * gas.m ** 2 / (gas.beta * gas.hbar)
            * omega * kernel.t0 ** 2 * radial)


def test_gaussian_example_value():
    gas = GasSpec("MaxwellBoltzmann", m=1, beta=1, z=1, n=1)
    c = fp.compute_coefficients(gas, 1.0, KernelSpec.gaussian(1.0, 1.0))
    np.testing.assert_allclose(c.D_pp, 4 * np.pi ** 3 / 3 / 0.625 ** 2, rtol=1e-10)
    assert c.gamma / c.D_pp == 0.5


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_quadrature_matches_closed_form(dim):
    gas = GasSpec("MaxwellBoltzmann", m=1.7, beta=0.6, z=0.3, n=2.0, hbar=0.8)
    k = KernelSpec.gaussian(0.4, 2.3)
    c = fp.compute_coefficients(gas, 3.0, k, dim=dim)
    np.testing.assert_allclose(c.D_pp, gaussian_dpp(gas, k, dim), rtol=1e-10)


def test_contact_kernel_uses_thermal_weight():
    gas = GasSpec("MaxwellBoltzmann", m=1.0, beta=2.0, z=0.5)
    c = fp.compute_coefficients(gas, 1.0, KernelSpec.contact(0.5))
    wide = fp.compute_coefficients(gas, 1.0, KernelSpec.gaussian(0.5, 1e6))
    np.testing.assert_allclose(c.D_pp, wide.D_pp, rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.1, 50), st.floats(0.1, 3))
def test_exact_relations(m, beta, M, sigma):
    gas = GasSpec("MaxwellBoltzmann", m=m, beta=beta, z=0.2)
    c = fp.compute_coefficients(gas, M, KernelSpec.gaussian(1.0, sigma))
    np.testing.assert_allclose(c.D_xx, (beta / (4 * M)) ** 2 * c.D_pp, rtol=4e-16)
    np.testing.assert_allclose(c.gamma, beta / (2 * M) * c.D_pp, rtol=4e-16)
    assert min(c.D_pp, c.D_xx, c.gamma) >= 0


def test_statistics_factor_ordering():
    k = KernelSpec.gaussian(1.0, 1.0)
    z = 0.5
    c = {s: fp.compute_coefficients(GasSpec(s, z=z), 2.0, k) for s in ("MaxwellBoltzmann", "Bose", "Fermi")}
    assert c["Bose"].gamma_eff > c["MaxwellBoltzmann"].gamma_eff > c["Fermi"].gamma_eff
    assert c["Bose"].gamma_eff / c["MaxwellBoltzmann"].gamma_eff == 2.0
    assert c["Fermi"].gamma_eff / c["MaxwellBoltzmann"].gamma_eff == pytest.approx(2 / 3, rel=1e-15)
    for s in c.values():
        assert s.gamma_eff / s.D_pp_eff == pytest.approx(1 / 4, rel=1e-15)


def test_coefficient_validation():
    with pytest.raises(DomainError):
        fp.FPCoefficients(-1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        fp.FPCoefficients(1.0, 1.0, 1.0, stat_factor=0.0)
    with pytest.raises(DomainError):
        fp.compute_coefficients(GasSpec(), -1.0, KernelSpec())


def test_closed_form_moments():
    c = fp.FPCoefficients.from_dpp(2.0, 1.0, 1.0, dim=3)
    p0 = np.array([1.0, -2.0, 0.5])
    p, E = fp.closed_form_moments(c, p0, 4.0, 0.0)
    np.testing.assert_array_equal(p, p0)
    assert E == 4.0
    p, E = fp.closed_form_moments(c, p0, 4.0, np.log(2) / (2 * c.gamma))
    np.testing.assert_allclose(p, p0 / 2, rtol=1e-15)
    p, E = fp.closed_form_moments(c, p0, 4.0, 1e3)
    np.testing.assert_allclose(p, 0, atol=1e-300)
    np.testing.assert_allclose(E, 1.5, rtol=1e-15)


def test_momentum_operator_structure():
    p = fp.momentum_grid(40, 6.0)
    A = fp.momentum_operator(p, 0.7, 0.35)
    np.testing.assert_allclose(A.sum(axis=0), 0, atol=1e-14)
    off = A - np.diag(np.diag(A))
    assert off.min() >= 0
    null = np.exp(-0.35 * p ** 2 / (2 * 0.7))
    np.testing.assert_allclose(A @ null, 0, atol=1e-14)


def test_stationary_field_stays_put():
    c = fp.FPCoefficients.from_dpp(1.0, 2.0, 1.0, dim=1)
    p = fp.momentum_grid(200, 8 * np.sqrt(2.0))
    f0 = fp.stationary_field(c, p)
    tau = 1 / (2 * c.gamma)
    run = fp.evolve_wigner(c, f0, 10 * tau, tau / 10)
    assert np.linalg.norm(run.field.values - f0.values) / np.linalg.norm(f0.values) < 1e-6
    assert run.mass_drift < 1e-8


def test_heat_kernel_variance_growth():
    c = fp.FPCoefficients(D_pp=0.3, D_xx=0.0, gamma=0.0, dim=1)
    p = fp.momentum_grid(600, 15.0)
    f0 = fp.gaussian_field(p, 0.0, 1.0)
    t = 2.0
    run = fp.evolve_wigner(c, f0, t, 0.05)
    f = run.field.marginal_p()
    var = f @ p ** 2 / f.sum()
    var0 = f0.values[0] @ p ** 2 / f0.values[0].sum()
    np.testing.assert_allclose(var - var0, 2 * c.D_pp * t, rtol=1e-3)


@pytest.mark.parametrize("integrator,steps_per_tau", [("exact", 40), ("explicit", 800)])
def test_drifted_gaussian_decay(integrator, steps_per_tau):
    c = fp.FPCoefficients.from_dpp(1.0, 2.0, 1.0, dim=1)
    p = fp.momentum_grid(300, 10 * np.sqrt(2.0))
    f0 = fp.gaussian_field(p, 3.0, 0.7)
    tau = 1 / (2 * c.gamma)
    run = fp.evolve_wigner(c, f0, 1.5 * tau, tau / steps_per_tau, integrator=integrator,
                           record_every=steps_per_tau // 10)
    t, pm, em, mass = np.array(run.history).T
    np.testing.assert_allclose(me.relaxation_rate(t, pm), 2 * c.gamma, rtol=0.01)
    np.testing.assert_allclose(pm, fp.closed_form_moments(c, pm[0], em[0], t)[0], rtol=0.01, atol=1e-3)
    np.testing.assert_allclose(mass, 1.0, atol=1e-8)


def test_explicit_step_bounds():
    c = fp.FPCoefficients.from_dpp(1.0, 2.0, 1.0, dim=1)
    p = fp.momentum_grid(100, 10.0)
    f0 = fp.gaussian_field(p, 0.0, 1.0)
    with pytest.raises(ContractViolation) as exc:
        fp.evolve_wigner(c, f0, 1.0, 0.1, integrator="explicit")
    assert exc.value.invariant == "diffusion_cfl"
    with pytest.raises(DomainError):
        fp.evolve_wigner(c, f0, 1.0, 0.01, integrator="rk9")


def test_full_phase_space_streaming_and_mass():
    c = fp.FPCoefficients.from_dpp(0.2, 1.0, 1.0, dim=1)
    p = fp.momentum_grid(64, 6.0)
    x = np.linspace(-10, 10, 64, endpoint=False)
    f0 = fp.gaussian_field(p, 1.0, 0.5, x=x, x0=0.0, x_width=1.0)
    run = fp.evolve_wigner(c, f0, 1.0, 0.01, record_every=50)
    assert run.mass_drift < 1e-8
    # centre of mass in x moves with <p>/M integrated over time
    f = run.field.values
    xm = (f.sum(axis=1) @ x) / f.sum()
    expected = (1.0 - np.exp(-2 * c.gamma)) / (2 * c.gamma)
    np.testing.assert_allclose(xm, expected, rtol=2e-2)


def test_momentum_only_converges_to_canonical():
    c = fp.FPCoefficients.from_dpp(1.0, 1.0, 1.0, dim=1)
    p = fp.momentum_grid(200, 10.0)
    f0 = fp.WignerField(np.zeros(1), p, ((np.abs(p - 2) < 1) * 1.0 + 0.1)[None, :], mode="momentum")
    f0.values /= f0.mass()
    target = fp.stationary_field(c, p).values
    dists = []
    run = fp.evolve_wigner(c, f0, 20 / (2 * c.gamma), 0.05,
                           callback=lambda s, t, f: dists.append(np.linalg.norm(f.values - target)),
                           record_every=20)
    assert np.all(np.diff(dists) <= 1e-14)
    assert dists[-1] < 1e-5


def kramers_moyal_setup(frac, t0=1.0, M=5.0):
    gas = GasSpec("MaxwellBoltzmann", m=1.0, beta=1.0, z=0.1)
    sigma = np.sqrt(8.0) / frac
    k = KernelSpec.gaussian(t0, sigma)
    c = fp.compute_coefficients(gas, M, k, dim=1)
    dp = sigma / 6
    sites = 2 * int(np.ceil(7 * np.sqrt(M) / dp))
    gen = me.GeneratorSpec(me.MomentumLattice(1, sites, dp), gas, k, M=M,
                           model="BrownianLimitMB", q_max=10 * sigma)
    rho0 = me.gaussian_state(gen.lattice, [2 * np.sqrt(M)], 0.5 * np.sqrt(M))
    return gen, c, rho0


def test_kramers_moyal_narrow_kernel_improves():
    reports = []
    for frac in (4, 8):
        gen, c, rho0 = kramers_moyal_setup(frac)
        reports.append(fp.kramers_moyal_check(gen, c, rho0, 1.5 / (2 * c.gamma)))
    wide, narrow = reports
    assert narrow["rate_discrepancy"] < wide["rate_discrepancy"] < 0.05
    assert narrow["p_discrepancy"] < wide["p_discrepancy"]


def test_kramers_moyal_no_coupling():
    gen, c, rho0 = kramers_moyal_setup(4, t0=0.0)
    rep = fp.kramers_moyal_check(gen, c, rho0, 1.0, n_points=5)
    assert rep["p_discrepancy"] == 0 and rep["E_discrepancy"] == 0
    assert np.isnan(rep["p_rate_ratio"])


def test_kramers_moyal_wide_kernel_reports_only():
    gen, c, rho0 = kramers_moyal_setup(0.5, M=2.0)
    rep = fp.kramers_moyal_check(gen, c, rho0, 0.5 / (2 * c.gamma), n_points=11)
    assert np.isfinite(rep["p_discrepancy"])
