"""Brownian (long-wavelength) limit: transport coefficients, closed-form
moment dynamics, and a Fokker-Planck solver for the Wigner function

    df/dt = -(p/M) df/dx + D_xx d2f/dx2 + D_pp d2f/dp2 + 2 gamma d(p f)/dp.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import ContractViolation, DomainError
from .gas_dsf import GasSpec, Statistics
from .kernel import KernelSpec

_STAT_FACTOR = {
    Statistics.MB: lambda z: 1.0,
    Statistics.BOSE: lambda z: 1.0 / (1.0 - z),
    Statistics.FERMI: lambda z: 1.0 / (1.0 + z),
}

# surface measure of the unit sphere in d dimensions (d = 1 counts +/- q)
_ANGULAR = {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}


@dataclass(frozen=True)
class FPCoefficients:
    """Diffusion and friction coefficients of the Brownian-limit generator.

    ``D_pp``, ``D_xx`` and ``gamma`` are the Maxwell-Boltzmann-structured
    values (linear in the fugacity); ``stat_factor`` multiplies all three
    jointly for Bose (1/(1-z)) or Fermi (1/(1+z)) gases.  The ``*_eff``
    properties include it.
    """

    D_pp: float
    D_xx: float
    gamma: float
    stat_factor: float = 1.0
    M: float = 1.0
    beta: float = 1.0
    hbar: float = 1.0
    dim: int = 3

    def __post_init__(self):
        if min(self.D_pp, self.D_xx, self.gamma) < 0:
            raise DomainError("transport coefficients must be non-negative", field="D_pp")
        if not self.stat_factor > 0:
            raise DomainError("stat_factor must be > 0", field="stat_factor")

    @classmethod
    def from_dpp(cls, D_pp, M, beta, hbar=1.0, stat_factor=1.0, dim=3):
        """Build the bundle from D_pp using the exact construction relations."""
        return cls(D_pp=D_pp, D_xx=(beta * hbar / (4 * M)) ** 2 * D_pp,
                   gamma=beta / (2 * M) * D_pp, stat_factor=stat_factor,
                   M=M, beta=beta, hbar=hbar, dim=dim)

    @property
    def D_pp_eff(self):
        return self.stat_factor * self.D_pp

    @property
    def D_xx_eff(self):
        return self.stat_factor * self.D_xx

    @property
    def gamma_eff(self):
        return self.stat_factor * self.gamma

    def to_dict(self):
        return {
            "D_pp": self.D_pp, "D_xx": self.D_xx, "gamma": self.gamma,
            "stat_factor": self.stat_factor,
            "D_pp_eff": self.D_pp_eff, "D_xx_eff": self.D_xx_eff,
            "gamma_eff": self.gamma_eff,
            "M": self.M, "beta": self.beta, "hbar": self.hbar, "dim": self.dim,
        }


def radial_integral(gas, kernel, dim=3, epsrel=1e-10):
    """int d^dim q |t(q)|^2 q exp(-beta q^2 / 8m), by adaptive quadrature on
    the radial variable with the angular factor applied analytically."""
    if dim not in _ANGULAR:
        raise DomainError("dim must be 1, 2 or 3", field="dim")
    a = gas.beta / (8 * gas.m)

    def integrand(q):
        return kernel.t2(q) * q ** dim * np.exp(-a * q * q)

    # the thermal factor sets the scale; split there to help the adaptive rule
    scale = 1 / np.sqrt(a)
    if kernel.form == "gaussian":
        scale = min(scale, kernel.sigma)
    val1, err1 = scipy.integrate.quad(integrand, 0, 8 * scale, epsabs=0, epsrel=epsrel, limit=200)
    val2, err2 = scipy.integrate.quad(integrand, 8 * scale, np.inf, epsabs=0, epsrel=epsrel, limit=200)
    val, err = val1 + val2, err1 + err2
    if not np.isfinite(val) or err > max(1e3 * epsrel * abs(val), 1e-300):
        raise ContractViolation(f"radial quadrature did not converge (err={err:.3g})",
                                invariant="quadrature")
    return _ANGULAR[dim] * val


def compute_coefficients(gas, M, kernel, dim=3):
    """Brownian-limit transport coefficients for a test particle of mass M.

    D_pp = z (2/dim) pi^2 m^2 / (beta hbar) int d^dim q |t(q)|^2 q e^{-beta q^2/8m}
    (dim = 3 gives the usual 2/3), D_xx = (beta hbar / 4M)^2 D_pp and
    gamma = (beta / 2M) D_pp.
    """
    if not M > 0:
        raise DomainError("test-particle mass M must be > 0", field="M")
    pref = gas.z * (2.0 / dim) * np.pi ** 2 * gas.m ** 2 / (gas.beta * gas.hbar)
    D_pp = pref * radial_integral(gas, kernel, dim)
    return FPCoefficients.from_dpp(D_pp, M, gas.beta, gas.hbar,
                                   stat_factor=_STAT_FACTOR[gas.statistics](gas.z), dim=dim)


def closed_form_moments(coeffs, p0, E0, t):
    """<p>(t) = p0 e^{-2 gamma t} and
    <E>(t) = dim/2beta + (E0 - dim/2beta) e^{-4 gamma t}, effective gamma."""
    t = np.asarray(t, dtype=float)
    g = coeffs.gamma_eff
    e_inf = coeffs.dim / (2 * coeffs.beta)
    p = np.multiply.outer(np.exp(-2 * g * t), np.asarray(p0, dtype=float))
    E = e_inf + (E0 - e_inf) * np.exp(-4 * g * t)
    return p, E


def kramers_moyal_check(gen, coeffs, rho0, t, n_points=61, max_step_norm=0.1):
    """Compare lattice master-equation moments with the Fokker-Planck
    closed forms started from the same <p>_0 and <E>_0.

    Returns a dict with the largest trajectory discrepancies (normalized by
    |<p>_0| and by |<E>_0 - dim/2beta|) and, when gamma > 0, the decay rates
    fitted over the first three e-folds relative to 2 gamma and 4 gamma.
    """
    from .megrid import moment_trajectory, relaxation_rate

    if coeffs.dim != gen.lattice.dim:
        raise DomainError("coefficient and lattice dimensions differ", field="dim")
    t_grid = np.linspace(0.0, t, n_points)
    p_me, E_me, tr = moment_trajectory(gen, rho0, t_grid, max_step_norm=max_step_norm)
    p_fp, E_fp = closed_form_moments(coeffs, p_me[0], E_me[0], t_grid)
    e_inf = coeffs.dim / (2 * coeffs.beta)
    p_scale = max(np.abs(p_me[0]).max(), 1e-300)
    E_scale = max(abs(E_me[0] - e_inf), 1e-300)
    report = {
        "p_discrepancy": float(np.abs(p_me - p_fp).max() / p_scale),
        "E_discrepancy": float(np.abs(E_me - E_fp).max() / E_scale),
        "trace_drift": float(np.abs(tr - tr[0]).max()),
        "p_rate_ratio": float("nan"),
        "E_rate_ratio": float("nan"),
    }
    g = coeffs.gamma_eff
    if g > 0:
        k = int(np.argmax(np.abs(p_me[0])))
        sel = t_grid * 2 * g <= 3 + 1e-12
        if sel.sum() >= 3:
            report["p_rate_ratio"] = float(relaxation_rate(t_grid[sel], p_me[sel, k]) / (2 * g))
        sel = t_grid * 4 * g <= 3 + 1e-12
        if sel.sum() >= 3:
            rate = relaxation_rate(t_grid[sel], E_me[sel], asymptote=e_inf)
            report["E_rate_ratio"] = float(rate / (4 * g))
    report["rate_discrepancy"] = float(max(abs(report["p_rate_ratio"] - 1),
                                           abs(report["E_rate_ratio"] - 1)))
    return report


# ---------------------------------------------------------------------------
# Fokker-Planck / Wigner solver


@dataclass
class WignerField:
    """Real phase-space field on a periodic x grid times a bounded p grid.

    ``values`` has shape (nx, np); in ``momentum`` mode nx is 1 and the
    x dependence is dropped.
    """

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray
    mode: str = "full"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.mode not in ("full", "momentum"):
            raise DomainError("mode must be 'full' or 'momentum'", field="mode")
        if self.values.shape != (len(self.x), len(self.p)):
            raise DomainError("values shape does not match the grids", field="values")

    @property
    def dx(self):
        return self.x[1] - self.x[0] if len(self.x) > 1 else 1.0

    @property
    def dp(self):
        return self.p[1] - self.p[0]

    def mass(self):
        return float(self.values.sum() * self.dx * self.dp)

    def marginal_p(self):
        return self.values.sum(axis=0) * self.dx

    def moments(self, M):
        """(<p>, <p^2/2M>) of the momentum marginal."""
        f = self.marginal_p()
        norm = f.sum()
        return float(f @ self.p / norm), float(f @ self.p ** 2 / norm / (2 * M))

    def copy(self):
        return replace(self, values=self.values.copy())


def momentum_grid(n, p_max):
    """Cell-centred grid of ``n`` points on [-p_max, p_max]."""
    dp = 2 * p_max / n
    return -p_max + dp * (np.arange(n) + 0.5)


def gaussian_field(p, p0, width, x=None, x0=0.0, x_width=None):
    """Normalized Gaussian in p (and optionally x, periodic grid)."""
    fp = np.exp(-(p - p0) ** 2 / (2 * width ** 2))
    fp /= fp.sum() * (p[1] - p[0])
    if x is None:
        return WignerField(np.zeros(1), p, fp[None, :], mode="momentum")
    L = x[-1] - x[0] + (x[1] - x[0])
    d = (x - x0 + L / 2) % L - L / 2
    fx = np.exp(-d ** 2 / (2 * x_width ** 2))
    fx /= fx.sum() * (x[1] - x[0])
    return WignerField(x, p, np.outer(fx, fp), mode="full")


def _bernoulli(x):
    """x / (e^x - 1), continuous at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1 - x / 2, safe / np.expm1(safe))


def momentum_operator(p, D, drift):
    """Tridiagonal matrix of d/dp (D df/dp + drift p f) with zero-flux ends.

    Scharfetter-Gummel fluxes make exp(-drift p^2 / 2D) an exact discrete
    null vector, the columns sum to zero (mass conservation) and all
    off-diagonal entries are non-negative (positivity).
    """
    h = p[1] - p[0]
    pm = 0.5 * (p[1:] + p[:-1])
    a = -drift * pm                      # velocity of the probability flow
    if D > 0:
        pe = a * h / D
        up = D / h * _bernoulli(-pe)     # flux weight of the left cell
        down = D / h * _bernoulli(pe)    # flux weight of the right cell
    else:
        up, down = np.maximum(a, 0.0), np.maximum(-a, 0.0)
    # J_{i+1/2} = up_i f_i - down_i f_{i+1};  df_i/dt = -(J_{i+1/2} - J_{i-1/2}) / h
    n = len(p)
    A = np.zeros((n, n))
    i = np.arange(n - 1)
    A[i, i] -= up / h
    A[i, i + 1] += down / h
    A[i + 1, i] += up / h
    A[i + 1, i + 1] -= down / h
    return A


@dataclass
class FPRun:
    field: WignerField
    t: float
    steps: int
    mass_drift: float = 0.0
    history: list = field(default_factory=list)


def evolve_wigner(coeffs, f0, t, dt, integrator="exact", record_every=0, callback=None,
                  mass_tol=1e-8):
    """Advance the Wigner field with Strang splitting.

    One step is half x-transport, full p-relaxation, half x-transport.  The
    x-transport (free streaming plus position diffusion) is diagonal in the
    x Fourier basis and applied exactly; the p-relaxation uses the
    Scharfetter-Gummel operator of :func:`momentum_operator`, propagated
    either exactly (``integrator='exact'``, matrix exponential) or by forward
    Euler (``'explicit'``, subject to a diffusion and a drift step bound).
    The statistics factor multiplies all dissipative coefficients.

    ``record_every`` > 0 stores (time, <p>, <E>, mass) every that many steps.
    A relative mass drift above ``mass_tol`` raises ContractViolation.
    """
    if not dt > 0:
        raise DomainError("dt must be > 0", field="dt")
    D = coeffs.D_pp_eff
    Dx = coeffs.D_xx_eff
    drift = 2 * coeffs.gamma_eff
    M = coeffs.M
    f = f0.copy()
    p = f.p
    h = f.dp
    A = momentum_operator(p, D, drift)
    if integrator == "exact":
        P = scipy.linalg.expm(dt * A)
    elif integrator == "explicit":
        if D * dt / h ** 2 > 0.5:
            raise ContractViolation(
                f"diffusion bound violated: D_pp dt / dp^2 = {D * dt / h ** 2:.3g} > 0.5",
                invariant="diffusion_cfl")
        if drift * np.abs(p).max() * dt / h > 1.0:
            raise ContractViolation("drift bound violated: 2 gamma p_max dt / dp > 1",
                                    invariant="drift_cfl")
        # total diagonal of A bounds the forward Euler positivity requirement
        if dt * np.abs(np.diag(A)).max() > 1.0:
            raise ContractViolation("positivity bound violated: dt |A_ii| > 1",
                                    invariant="positivity_cfl")
        P = np.eye(len(p)) + dt * A
    else:
        raise DomainError(f"unknown integrator {integrator!r}", field="integrator")

    full = f.mode == "full"
    if full:
        nx = len(f.x)
        k = 2 * np.pi * np.fft.fftfreq(nx, d=f.dx)
        # half step of streaming (-p/M d/dx) and x-diffusion in Fourier space
        half = np.exp(np.outer(-1j * k, p) * (0.5 * dt / M) - Dx * (k ** 2)[:, None] * 0.5 * dt)

    m0 = f.mass()
    steps = int(round(t / dt))
    run = FPRun(f, 0.0, 0)

    def record(step):
        pm, em = f.moments(M)
        run.history.append((step * dt, pm, em, f.mass()))
        if callback is not None:
            callback(step, step * dt, f)

    if record_every:
        record(0)
    for step in range(1, steps + 1):
        if full:
            fk = np.fft.fft(f.values, axis=0) * half
            vals = np.fft.ifft(fk, axis=0).real
            vals = vals @ P.T
            fk = np.fft.fft(vals, axis=0) * half
            f.values = np.fft.ifft(fk, axis=0).real
        else:
            f.values = f.values @ P.T
        if record_every and (step % record_every == 0 or step == steps):
            record(step)
    run.field, run.t, run.steps = f, steps * dt, steps
    run.mass_drift = abs(f.mass() - m0)
    if run.mass_drift > mass_tol * abs(m0):
        raise ContractViolation(f"mass drifted by {run.mass_drift:.3g}",
                                invariant="mass_conservation", step=steps)
    return run


def stationary_field(coeffs, p):
    """Discrete stationary state of the momentum-only solver."""
    # exact null vector of momentum_operator
    w = np.exp(-coeffs.gamma * p ** 2 / coeffs.D_pp)
    w /= w.sum() * (p[1] - p[0])
    return WignerField(np.zeros(1), p, w[None, :], mode="momentum")
