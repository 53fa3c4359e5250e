"""Dynamic structure factors of ideal Maxwell-Boltzmann, Bose and Fermi gases.

All closed forms share the prefactor

    C(q) = 2 pi m^2 / ((2 pi hbar)^3 n beta q)

and the two Gaussian exponents

    A_plus  = beta (2 m E + q^2)^2 / (8 m q^2)
    A_minus = beta (2 m E - q^2)^2 / (8 m q^2) = A_plus - beta E

in terms of which S_MB = C z exp(-A_plus).  ``E`` is the energy transferred
*to the test particle*, so the detailed-balance relation reads
S(q, E) = exp(-beta E) S(q, -E).

The quantum-statistics forms are evaluated through exact algebraic
rewrites that avoid ``exp(beta E)`` entirely; this removes both the overflow
at large |beta E| and the removable 0/0 at E = 0 without any switching
threshold.
"""

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError


class Statistics(str, enum.Enum):
    MB = "MaxwellBoltzmann"
    BOSE = "Bose"
    FERMI = "Fermi"


class DsfModel(str, enum.Enum):
    MB = "MB"
    BOSE_LOG = "BoseLog"
    FERMI_LOG = "FermiLog"
    BOSE_ARTH = "BoseArth"
    FERMI_ARTH = "FermiArth"
    BROWNIAN_MB = "BrownianLimitMB"


_MODEL_STATISTICS = {
    DsfModel.MB: Statistics.MB,
    DsfModel.BROWNIAN_MB: Statistics.MB,
    DsfModel.BOSE_LOG: Statistics.BOSE,
    DsfModel.BOSE_ARTH: Statistics.BOSE,
    DsfModel.FERMI_LOG: Statistics.FERMI,
    DsfModel.FERMI_ARTH: Statistics.FERMI,
}

_DEFAULT_MODEL = {
    Statistics.MB: DsfModel.MB,
    Statistics.BOSE: DsfModel.BOSE_LOG,
    Statistics.FERMI: DsfModel.FERMI_LOG,
}


@dataclass(frozen=True)
class GasSpec:
    """Thermodynamic state of an ideal host gas."""

    statistics: Statistics = Statistics.MB
    m: float = 1.0
    beta: float = 1.0
    z: float = 0.1
    n: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "statistics", Statistics(self.statistics))
        for name in ("m", "beta", "n", "hbar"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}", field=name)
        if not (np.isfinite(self.z) and self.z >= 0):
            raise DomainError(f"z must be finite and >= 0, got {self.z!r}", field="z")
        if self.statistics is Statistics.BOSE and not self.z < 1:
            raise DomainError(f"Bose gas requires 0 <= z < 1, got z={self.z!r}", field="z")

    @property
    def sign(self):
        """+1 for Bose, -1 for Fermi, 0 for Maxwell-Boltzmann."""
        return {Statistics.BOSE: 1, Statistics.FERMI: -1, Statistics.MB: 0}[self.statistics]

    def prefactor(self, q):
        """The common factor 2 pi m^2 / ((2 pi hbar)^3 n beta q)."""
        return 2 * np.pi * self.m ** 2 / ((2 * np.pi * self.hbar) ** 3 * self.n * self.beta * q)

    def occupation(self, p2):
        """Mean occupation of a gas mode with squared momentum ``p2``."""
        x = self.z * np.exp(-self.beta * np.asarray(p2) / (2 * self.m))
        if self.statistics is Statistics.MB:
            return x
        return x / (1 - self.sign * x)

    def to_dict(self):
        d = asdict(self)
        d["statistics"] = self.statistics.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def default_model(statistics):
    return _DEFAULT_MODEL[Statistics(statistics)]


def _check_q(q):
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0)):
        raise DomainError("momentum transfer q must be > 0 (q = 0 is excluded)", field="q")
    return q


def _exponents(gas, q, E):
    a_plus = gas.beta * (2 * gas.m * E + q ** 2) ** 2 / (8 * gas.m * q ** 2)
    a_minus = gas.beta * (2 * gas.m * E - q ** 2) ** 2 / (8 * gas.m * q ** 2)
    return a_plus, a_minus


def _log1p_over(y):
    """log(1 + y) / y, continuous at y = 0."""
    y = np.asarray(y, dtype=float)
    small = np.abs(y) < 1e-4
    safe = np.where(small, 1.0, y)
    series = 1 - y / 2 + y ** 2 / 3 - y ** 3 / 4
    return np.where(small, series, np.log1p(safe) / safe)


def _arctanh_over(u):
    """arth(u) / u, continuous at u = 0."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) >= 1):
        raise DomainError("arth argument outside (-1, 1)", field="z")
    small = np.abs(u) < 1e-4
    us = np.where(small, 0.5, u)
    series = 1 + u ** 2 / 3 + u ** 4 / 5
    return np.where(small, series, np.arctanh(us) / us)


def _dsf_mb(gas, q, E):
    a_plus, _ = _exponents(gas, q, E)
    return gas.prefactor(q) * gas.z * np.exp(-a_plus)


def _dsf_log(gas, q, E, s):
    # S = S_MB / (1 - s z e^{-A-}) * log(1+y)/y, with
    # 1 + y = (1 - s z e^{-A+}) / (1 - s z e^{-A-}).
    a_plus, a_minus = _exponents(gas, q, E)
    ep, em = np.exp(-a_plus), np.exp(-a_minus)
    den = 1 - s * gas.z * em
    y = s * gas.z * (em - ep) / den
    return gas.prefactor(q) * gas.z * ep / den * _log1p_over(y)


def _dsf_arth(gas, q, E, s):
    # The arth form with e^{-x}/sinh(x) = 2/expm1(2x), x = beta E / 2.  The
    # combination z G sinh(x) / expm1(2x) equals (z/2) e^{-A+} identically,
    # which leaves arth(u)/u as the only nontrivial factor.
    a_plus, a_minus = _exponents(gas, q, E)
    x = gas.beta * E / 2
    ep, em = np.exp(-a_plus), np.exp(-a_minus)
    g_cosh = 0.5 * (em + ep)
    g_sinh = np.where(x >= 0, -0.5 * em * np.expm1(-2 * x), 0.5 * ep * np.expm1(2 * x))
    den = 1 - s * gas.z * g_cosh
    u = gas.z * g_sinh / den
    return gas.prefactor(q) * gas.z * ep / den * _arctanh_over(u)


def _dsf_brownian(gas, q, E):
    return gas.prefactor(q) * gas.z * np.exp(-gas.beta * q ** 2 / (8 * gas.m) - gas.beta * E / 2)


def evaluate_dsf(gas, q, E, model=None):
    """Dynamic structure factor S(q, E) of an ideal gas.

    Parameters
    ----------
    gas : GasSpec
    q : array_like
        Modulus of the momentum transferred to the test particle, > 0.
    E : array_like
        Energy transferred to the test particle (any sign).
    model : DsfModel or str, optional
        Closed form to evaluate; defaults to the log form matching
        ``gas.statistics`` (plain MB form for Maxwell-Boltzmann).

    Returns
    -------
    ndarray
        Non-negative spectral weight, broadcast over ``q`` and ``E``.
    """
    model = default_model(gas.statistics) if model is None else DsfModel(model)
    if _MODEL_STATISTICS[model] is not gas.statistics:
        raise DomainError(
            f"model {model.value} is inconsistent with {gas.statistics.value} statistics",
            field="model")
    q = _check_q(q)
    E = np.asarray(E, dtype=float)
    if model is DsfModel.MB:
        out = _dsf_mb(gas, q, E)
    elif model is DsfModel.BROWNIAN_MB:
        out = _dsf_brownian(gas, q, E)
    elif model in (DsfModel.BOSE_LOG, DsfModel.FERMI_LOG):
        out = _dsf_log(gas, q, E, gas.sign)
    else:
        out = _dsf_arth(gas, q, E, gas.sign)
    if np.any(np.isnan(out)):
        raise DomainError("structure factor evaluation produced NaN", field="E")
    return out


def evaluate_dsf_brownian(gas, M, q, p, recoil=True):
    """Brownian-limit MB structure factor as a function of momenta.

    ``q`` and ``p`` are vectors (last axis = Cartesian components) of the
    momentum transfer and the test-particle momentum; the energy transfer is
    q^2/2M + q.p/M.  With ``recoil=False`` the (1 + 2 m/M) correction to the
    q^2 exponent is dropped.
    """
    if gas.statistics is not Statistics.MB:
        raise DomainError("Brownian-limit form is defined for MB statistics", field="statistics")
    if not M > 0:
        raise DomainError("test-particle mass M must be > 0", field="M")
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    qn = _check_q(np.linalg.norm(q, axis=-1))
    alpha = gas.m / M if recoil else 0.0
    expo = -gas.beta * (1 + 2 * alpha) * qn ** 2 / (8 * gas.m)
    expo = expo - gas.beta * np.sum(q * p, axis=-1) / (2 * M)
    return gas.prefactor(qn) * gas.z * np.exp(expo)


def energy_transfer(q, p, M):
    """Kinetic energy gained by a particle of mass M kicked from p to p + q."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return (np.sum(q * q, axis=-1) / 2 + np.sum(q * p, axis=-1)) / M


def mean_energy_excess(gas, q, E1, E2):
    """Ratio S_MB(q, (E1+E2)/2) / sqrt(S_MB(q, E1) S_MB(q, E2)).

    Exactly exp(beta m (E1 - E2)^2 / (8 q^2)): the amount by which the MB
    structure factor at the mean energy exceeds the geometric mean.
    """
    q = _check_q(q)
    return np.exp(gas.beta * gas.m * (np.asarray(E1) - np.asarray(E2)) ** 2 / (8 * q ** 2))


# ---------------------------------------------------------------------------
# discrete mode-sum oracle


@dataclass(frozen=True)
class ModeGrid:
    """Cubic lattice of gas-particle momenta, p = spacing * (i - sites/2)."""

    sites: int
    spacing: float
    dim: int = 3

    def momenta(self):
        axis = self.spacing * (np.arange(self.sites) - self.sites // 2)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def index_of(self, q):
        """Integer lattice offset of the vector ``q`` (must lie on the grid)."""
        k = np.asarray(q, dtype=float) / self.spacing
        ki = np.rint(k).astype(int)
        if not np.allclose(k, ki, atol=1e-9):
            raise DomainError("q must be a lattice vector of the mode grid", field="q")
        return ki


def dsf_discrete_oracle(gas, grid, q, energy_edges):
    """Bin the delta-function mode sum of an ideal gas structure factor.

    Every gas mode p contributes weight <n_p>(1 +/- <n_{p-q}>) at the energy
    E = (p^2 - (p-q)^2) / 2m released into the test particle; the mode sum
    is normalised as (1/N) sum_p -> spacing^3 / (n (2 pi hbar)^3) sum_p.
    Modes whose partner p - q falls off the grid are counted with
    <n_{p-q}> = 0.  The forward-scattering q = 0 term is never included.

    Returns
    -------
    ndarray
        Bin-averaged S (total weight in the bin divided by its width).
    """
    k = grid.index_of(q)
    if not np.any(k):
        raise DomainError("q = 0 requested; the forward term is excluded", field="q")
    qv = k * grid.spacing
    p = grid.momenta().reshape(-1, grid.dim)
    occ = gas.occupation(np.sum(p * p, axis=-1))
    if gas.statistics is not Statistics.MB:
        # occupation of p - q, zero when the partner mode is off the grid
        idx = np.rint(p / grid.spacing).astype(int) + grid.sites // 2 - k
        inside = np.all((idx >= 0) & (idx < grid.sites), axis=-1)
        pq = p - qv
        partner = np.where(inside, gas.occupation(np.sum(pq * pq, axis=-1)), 0.0)
        occ = occ * (1 + gas.sign * partner)
    E = (p @ qv - 0.5 * qv @ qv) / gas.m
    norm = grid.spacing ** grid.dim / (gas.n * (2 * np.pi * gas.hbar) ** 3)
    edges = np.asarray(energy_edges, dtype=float)
    hist, _ = np.histogram(E, bins=edges, weights=occ * norm)
    return hist / np.diff(edges)


def aligned_energy_edges(gas, grid, q, e_min, e_max, levels_per_bin=1):
    """Bin edges placed halfway between the discrete energy levels of the
    mode sum, so each bin holds exactly ``levels_per_bin`` levels."""
    k = grid.index_of(q)
    step = np.gcd.reduce(np.abs(k[k != 0])) * grid.spacing ** 2 / gas.m
    offset = -0.5 * float(k @ k) * grid.spacing ** 2 / gas.m
    width = levels_per_bin * step
    j0 = np.floor((e_min - offset) / step)
    j1 = np.ceil((e_max - offset) / step)
    edges = offset + (np.arange(j0, j1 + levels_per_bin, levels_per_bin) - 0.5) * step
    return edges[edges <= e_max + width]


def cross_section(gas, kernel, p_in, p_out, M, model=None):
    """Double-differential cross-section per target particle,
    (2 pi hbar)^6 (M / 2 pi hbar^2)^2 (p'/p) |t(q)|^2 S(q, E).

    ``p_in``/``p_out`` are the incoming/outgoing probe momenta (vectors) and
    ``M`` the probe mass.
    """
    p_in = np.asarray(p_in, dtype=float)
    p_out = np.asarray(p_out, dtype=float)
    pin = np.linalg.norm(p_in, axis=-1)
    pout = np.linalg.norm(p_out, axis=-1)
    if np.any(~(pin > 0)):
        raise DomainError("incident momentum must be nonzero", field="p_in")
    qn = _check_q(np.linalg.norm(p_out - p_in, axis=-1))
    E = (pout ** 2 - pin ** 2) / (2 * M)
    h = gas.hbar
    pref = (2 * np.pi * h) ** 6 * (M / (2 * np.pi * h ** 2)) ** 2
    return pref * (pout / pin) * kernel.t2(qn) * evaluate_dsf(gas, qn, E, model)
