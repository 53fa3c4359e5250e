"""Collisional master equation for a test particle on a momentum lattice.

The generator is kept in the factorized (GKSL) form

    d rho/dt = -i/hbar [p^2/2M, rho]
               + sum_{q != 0} ( A_q rho A_q^dag - 1/2 {A_q^dag A_q, rho} ),

    A_q = sum_p sqrt(W(q, p)) |p + q><p|,   W(q, p) = w(q) S(q, dE_q(p)),

with dE_q(p) = q^2/2M + q.p/M and per-site coupling
w(q) = (2 pi/hbar) (2 pi hbar)^3 n dq^dim |t(q)|^2.

Boundary handling: with ``wrap=False`` a jump whose destination lies off the
lattice is removed from both the gain and the loss term.  The generator then
stays in GKSL form, preserves the trace exactly, and keeps the canonical
state exp(-beta p^2 / 2M) exactly stationary for every structure factor
obeying detailed balance.  ``wrap=True`` folds destinations periodically.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ContractViolation, DomainError, ResourceError
from .gas_dsf import DsfModel, GasSpec, default_model, evaluate_dsf
from .kernel import KernelSpec


@dataclass(frozen=True)
class MomentumLattice:
    """Regular momentum lattice, symmetric about p = 0.

    With an even number of sites per axis the sites sit at half-integer
    multiples of ``dp``, so p = 0 is not a site but -p is a site whenever p is.
    """

    dim: int = 1
    sites: int = 16
    dp: float = 1.0
    wrap: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DomainError("lattice dim must be 1, 2 or 3", field="dim")
        if self.sites < 2 or self.sites % 2:
            raise DomainError("sites per axis must be even and >= 2", field="sites")
        if not self.dp > 0:
            raise DomainError("dp must be > 0", field="dp")

    @property
    def size(self):
        return self.sites ** self.dim

    def axis(self):
        return self.dp * (np.arange(self.sites) - (self.sites - 1) / 2)

    def multi_index(self):
        """(size, dim) integer coordinates of every site in C order."""
        grids = np.meshgrid(*([np.arange(self.sites)] * self.dim), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def momenta(self):
        """(size, dim) momenta of the sites, flattened in C order."""
        return self.axis()[self.multi_index()]

    def kinetic(self, M):
        p = self.momenta()
        return np.sum(p * p, axis=-1) / (2 * M)

    def to_dict(self):
        return {"dim": self.dim, "sites": self.sites, "dp": self.dp, "wrap": self.wrap}


@dataclass(frozen=True)
class _Channels:
    k: np.ndarray        # (Q, dim) integer offsets of the momentum transfers
    q: np.ndarray        # (Q, dim) momentum transfers
    src: np.ndarray      # (Q, D) source site feeding target site p, -1 if none
    rate_in: np.ndarray  # (Q, D) W(q, source) for jumps landing on p, 0 if none
    rate_out: np.ndarray  # (Q, D) W(q, p) for jumps leaving p, 0 if forbidden
    loss: np.ndarray     # (D,) total escape rate sum_q rate_out


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to assemble the lattice master equation.

    ``q_max`` drops momentum transfers with |q| > q_max (useful for narrow
    kernels); ``factorized=False`` switches the gain term to the
    arithmetic-mean energy form, which is not GKSL unless the structure factor
    factorizes exactly.  ``anticommutator_scale`` and ``coherence_scale`` exist
    only to build corrupted generators for negative controls.
    """

    lattice: MomentumLattice
    gas: GasSpec
    kernel: KernelSpec
    M: float
    model: DsfModel = None
    q_max: float = None
    factorized: bool = True
    anticommutator_scale: float = 1.0
    coherence_scale: float = 1.0

    def __post_init__(self):
        if not self.M > 0:
            raise DomainError("test-particle mass M must be > 0", field="M")
        model = default_model(self.gas.statistics) if self.model is None else DsfModel(self.model)
        object.__setattr__(self, "model", model)

    @property
    def hbar(self):
        return self.gas.hbar

    @property
    def size(self):
        return self.lattice.size

    def coupling(self, qn):
        """w(q) per lattice q-site."""
        lat, gas = self.lattice, self.gas
        pref = (2 * np.pi / gas.hbar) * (2 * np.pi * gas.hbar) ** 3 * gas.n * lat.dp ** lat.dim
        return pref * self.kernel.t2(qn)

    def rate(self, q, p):
        """Jump rate W(q, p) = w(q) S(q, dE_q(p)) for vectors q, p."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        qn = np.linalg.norm(q, axis=-1)
        E = (0.5 * np.sum(q * q, axis=-1) + np.sum(q * p, axis=-1)) / self.M
        return self.coupling(qn) * evaluate_dsf(self.gas, qn, E, self.model)

    @cached_property
    def channels(self):
        lat = self.lattice
        n = lat.sites
        kmax = n // 2 if lat.wrap else n - 1
        rng = np.arange(-kmax, kmax + 1)
        k = np.stack([g.ravel() for g in np.meshgrid(*([rng] * lat.dim), indexing="ij")], -1)
        k = k[np.any(k != 0, axis=1)]
        q = k * lat.dp
        if self.q_max is not None:
            keep = np.linalg.norm(q, axis=1) <= self.q_max
            k, q = k[keep], q[keep]
        idx = lat.multi_index()
        p = lat.momenta()
        strides = n ** np.arange(lat.dim - 1, -1, -1)
        Q, D = len(k), lat.size
        src = np.full((Q, D), -1)
        rate_in = np.zeros((Q, D))
        rate_out = np.zeros((Q, D))
        for c in range(Q):
            w_all = self.rate(q[c], p)
            # source of each target site: idx - k
            s = idx - k[c]
            if lat.wrap:
                s %= n
                ok = np.ones(D, dtype=bool)
            else:
                ok = np.all((s >= 0) & (s < n), axis=1)
            s_flat = np.where(ok, s @ strides, -1)
            src[c] = s_flat
            rate_in[c] = np.where(ok, w_all[np.where(ok, s_flat, 0)], 0.0)
            # destinations reached from each site
            d = idx + k[c]
            d_ok = np.ones(D, dtype=bool) if lat.wrap else np.all((d >= 0) & (d < n), axis=1)
            rate_out[c] = np.where(d_ok, w_all, 0.0)
        return _Channels(k, q, src, rate_in, rate_out, rate_out.sum(axis=0))

    @cached_property
    def stacked(self):
        """Channel-stacked gather indices and gain amplitudes for small
        lattices, None when the (Q, D, D) stack would be too large."""
        ch = self.channels
        Q, D = ch.src.shape
        if Q * D * D > 2_000_000:
            return None
        si = np.where(ch.src >= 0, ch.src, 0)
        a = np.sqrt(ch.rate_in)
        return si, a[:, :, None] * a[:, None, :]

    @cached_property
    def energies(self):
        return self.lattice.kinetic(self.M)

    def total_rate(self):
        """Largest escape rate over the lattice; scale for rate residuals."""
        return float(self.channels.loss.max())

    def to_dict(self):
        return {
            "lattice": self.lattice.to_dict(),
            "gas": self.gas.to_dict(),
            "kernel": self.kernel.to_dict(),
            "M": self.M,
            "model": self.model.value,
            "q_max": self.q_max,
            "factorized": self.factorized,
        }


def _check_rho(gen, rho):
    rho = np.asarray(rho)
    D = gen.size
    if rho.shape != (D, D):
        raise DomainError(f"rho has shape {rho.shape}, lattice needs ({D}, {D})", field="rho")
    scale = max(np.abs(rho).max(), 1e-300)
    if np.abs(rho - rho.conj().T).max() > 1e-10 * scale:
        raise DomainError("rho is not Hermitian", field="rho")
    return rho


def _gather(rho, s):
    valid = s >= 0
    si = np.where(valid, s, 0)
    block = rho[np.ix_(si, si)]
    return block, valid


def apply_generator(gen, rho, check=True):
    """d rho / dt for the lattice master equation, free commutator included."""
    if check:
        rho = _check_rho(gen, rho)
    ch = gen.channels
    E = gen.energies
    out = (-1j / gen.hbar) * (E[:, None] - E[None, :]) * rho
    gain = np.zeros_like(out)
    if gen.factorized and gen.stacked is not None:
        si, amp = gen.stacked
        gain = np.einsum("cij,cij->ij", amp, rho[si[:, :, None], si[:, None, :]])
    elif gen.factorized:
        for c in range(len(ch.k)):
            block, _ = _gather(rho, ch.src[c])
            a = np.sqrt(ch.rate_in[c])
            gain += np.outer(a, a) * block
    else:
        p = gen.lattice.momenta()
        for c in range(len(ch.k)):
            block, valid = _gather(rho, ch.src[c])
            qv = ch.q[c]
            qn = np.linalg.norm(qv)
            # energy transfer of each source site, then the arithmetic mean
            e_src = (0.5 * qv @ qv + (p - qv) @ qv) / gen.M
            e_mean = 0.5 * (e_src[:, None] + e_src[None, :])
            s_mean = gen.coupling(qn) * evaluate_dsf(gen.gas, qn, e_mean, gen.model)
            gain += np.where(np.outer(valid, valid), s_mean, 0.0) * block
    if gen.coherence_scale != 1.0:
        diag = np.diag(np.diag(gain))
        gain = diag + gen.coherence_scale * (gain - diag)
    loss = gen.anticommutator_scale * 0.5 * (ch.loss[:, None] + ch.loss[None, :]) * rho
    return out + gain - loss


def apply_adjoint(gen, obs):
    """Heisenberg-picture generator: Tr(L'[A] rho) = Tr(A L[rho])."""
    obs = np.asarray(obs)
    ch = gen.channels
    E = gen.energies
    out = (1j / gen.hbar) * (E[:, None] - E[None, :]) * obs
    if not gen.factorized:
        raise NotImplementedError("adjoint only available for the factorized generator")
    D = gen.size
    scaled = obs
    if gen.coherence_scale != 1.0:
        dg = np.diag(np.diag(obs))
        scaled = dg + gen.coherence_scale * (obs - dg)
    for c in range(len(ch.k)):
        # A_q^dag X A_q with (A_q)_{p, s(p)} = sqrt(rate_in)
        s, a = ch.src[c], np.sqrt(ch.rate_in[c])
        valid = s >= 0
        amat = np.zeros((D, D))
        amat[np.arange(D)[valid], s[valid]] = a[valid]
        out += amat.T @ scaled @ amat
    out -= gen.anticommutator_scale * 0.5 * (ch.loss[:, None] + ch.loss[None, :]) * obs
    return out


def rate_matrix(gen):
    """Classical rate matrix acting on the diagonal of rho (populations).

    The diagonal of a translation-covariant generator evolves on its own, so
    this matrix generates the exact population dynamics.  Returned as a
    sparse CSR matrix.
    """
    ch = gen.channels
    D = gen.size
    valid = ch.src >= 0
    rows = np.broadcast_to(np.arange(D), ch.src.shape)[valid]
    R = scipy.sparse.coo_matrix((ch.rate_in[valid], (rows, ch.src[valid])), shape=(D, D))
    R = (R - scipy.sparse.diags(ch.loss)).tocsr()
    return R


def superoperator(gen, max_sites=16):
    """Dense D^2 x D^2 matrix of the generator acting on row-major vec(rho)."""
    D = gen.size
    if D > max_sites:
        raise ResourceError(f"{D} lattice sites exceed the dense limit of {max_sites}")
    L = np.zeros((D * D, D * D), dtype=complex)
    basis = np.zeros((D, D), dtype=complex)
    for i in range(D):
        for j in range(D):
            basis[i, j] = 1.0
            L[:, i * D + j] = apply_generator(gen, basis, check=False).ravel()
            basis[i, j] = 0.0
    return L


def choi_matrix(channel, D):
    """Choi matrix sum_ij |i><j| (x) Phi(|i><j|) of a row-major superoperator."""
    return channel.reshape(D, D, D, D).transpose(2, 0, 3, 1).reshape(D * D, D * D)


def choi_min_eigenvalue(gen, dt, max_sites=16):
    """Smallest eigenvalue of the Choi matrix of exp(dt L)."""
    D = gen.size
    L = superoperator(gen, max_sites=max_sites)
    channel = scipy.linalg.expm(dt * L)
    choi = choi_matrix(channel, D)
    choi = 0.5 * (choi + choi.conj().T)
    return float(np.linalg.eigvalsh(choi)[0])


def generator_norm(gen, iters=40, seed=0):
    """Power-iteration estimate of the operator 2-norm of L (Frobenius inner
    product on matrices), via the dominant eigenvalue of L'L."""
    rng = np.random.default_rng(seed)
    D = gen.size
    x = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = apply_adjoint(gen, apply_generator(gen, x, check=False))
        lam = np.linalg.norm(y)
        if lam == 0:
            return 0.0
        x = y / lam
    return float(np.sqrt(lam))


# ---------------------------------------------------------------------------
# states


def diagonal_state(weights):
    w = np.asarray(weights, dtype=float)
    return np.diag(w / w.sum()).astype(complex)


def canonical_state(lattice, M, beta):
    """Normalized exp(-beta p^2 / 2M) on the lattice."""
    return diagonal_state(np.exp(-beta * lattice.kinetic(M) + beta * lattice.kinetic(M).min()))


def gaussian_state(lattice, p0, width):
    """Diagonal state with Gaussian populations centred at ``p0``."""
    p = lattice.momenta()
    d2 = np.sum((p - np.broadcast_to(np.asarray(p0, float), p.shape)) ** 2, axis=-1)
    return diagonal_state(np.exp(-(d2 - d2.min()) / (2 * width ** 2)))


def pure_momentum_state(lattice, p0):
    """Projector on the lattice site closest to ``p0``."""
    p = lattice.momenta()
    i = np.argmin(np.sum((p - np.asarray(p0, float)) ** 2, axis=-1))
    rho = np.zeros((lattice.size, lattice.size), dtype=complex)
    rho[i, i] = 1.0
    return rho


def validate_state(rho, tol_herm=1e-12, tol_trace=1e-12, tol_eig=-1e-10):
    rho = np.asarray(rho)
    if np.abs(rho - rho.conj().T).max() > tol_herm:
        raise DomainError("density matrix is not Hermitian", field="rho")
    if abs(np.trace(rho) - 1) > tol_trace:
        raise DomainError("density matrix does not have unit trace", field="rho")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < tol_eig:
        raise DomainError("density matrix is not positive", field="rho")
    return rho


# ---------------------------------------------------------------------------
# time evolution


@dataclass
class EvolutionResult:
    rho: np.ndarray
    t: float
    steps: int
    trace_drift: float = 0.0
    hermiticity_correction: float = 0.0
    min_eigenvalue: float = 0.0
    checkpoints: list = field(default_factory=list)

    def monitors(self):
        return {
            "steps": self.steps,
            "trace_drift": self.trace_drift,
            "hermiticity_correction": self.hermiticity_correction,
            "min_eigenvalue": self.min_eigenvalue,
        }


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def check_step(gen, dt, max_step_norm=0.1, norm=None):
    if not dt > 0:
        raise DomainError("dt must be > 0", field="dt")
    norm = generator_norm(gen) if norm is None else norm
    if dt * norm > max_step_norm:
        raise ContractViolation(
            f"step rejected: dt*|L| = {dt * norm:.3g} exceeds {max_step_norm}",
            invariant="step_size")
    return norm


def evolve(gen, rho0, t, dt, checkpoint_stride=0, callback=None, max_step_norm=0.1,
           step_trace_tol=1e-12):
    """Integrate the master equation with classical RK4 at fixed step.

    The trace is monitored but never renormalized; Hermiticity is restored
    by symmetrization after each step and the largest correction recorded.
    ``callback(step, time, rho)`` is called at every checkpoint (and at the
    start and end of the run) when ``checkpoint_stride > 0``.
    """
    rho = np.array(_check_rho(gen, rho0), dtype=complex)
    if t < 0:
        raise DomainError("t must be >= 0", field="t")
    steps = int(round(t / dt)) if t > 0 else 0
    if steps:
        check_step(gen, dt, max_step_norm)
    tr0 = np.trace(rho).real
    res = EvolutionResult(rho, 0.0, 0)
    res.min_eigenvalue = float(np.linalg.eigvalsh(rho)[0])

    def checkpoint(step, time):
        mineig = float(np.linalg.eigvalsh(rho)[0])
        res.min_eigenvalue = min(res.min_eigenvalue, mineig)
        res.checkpoints.append((step, time, mineig))
        if callback is not None:
            callback(step, time, rho)

    if checkpoint_stride:
        checkpoint(0, 0.0)
    f = lambda r: apply_generator(gen, r, check=False)
    for step in range(1, steps + 1):
        tr_before = np.trace(rho).real
        rho = _rk4(f, rho, dt)
        herm = 0.5 * (rho + rho.conj().T)
        res.hermiticity_correction = max(res.hermiticity_correction, float(np.abs(rho - herm).max()))
        rho = herm
        tr = np.trace(rho).real
        if abs(tr - tr_before) > step_trace_tol:
            raise ContractViolation(
                f"trace changed by {abs(tr - tr_before):.3g} in one step",
                invariant="trace_preservation", step=step)
        res.trace_drift = max(res.trace_drift, abs(tr - tr0))
        if checkpoint_stride and (step % checkpoint_stride == 0 or step == steps):
            checkpoint(step, step * dt)
    res.rho, res.t, res.steps = rho, steps * dt, steps
    return res


def _sparse_norm(R):
    if R.shape[0] <= 400:
        return float(np.linalg.norm(R.toarray(), 2))
    return float(scipy.sparse.linalg.svds(R, k=1, return_singular_vectors=False,
                                          random_state=0)[0])


def moment_trajectory(gen, rho0, t_grid, dt=None, max_step_norm=0.1):
    """<p>(t), <p^2/2M>(t) and the trace on ``t_grid``.

    Momentum moments only involve the populations, which evolve under
    :func:`rate_matrix` independently of the coherences, so only the
    diagonal is propagated (RK4, fixed step ``dt``).  ``dt=None`` picks
    the largest step allowed by ``max_step_norm``.
    """
    rho0 = _check_rho(gen, rho0)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < 0:
        raise DomainError("t_grid must be non-negative and increasing", field="t_grid")
    R = rate_matrix(gen)
    norm = _sparse_norm(R)
    if dt is None:
        dt = max_step_norm / norm if norm > 0 else max(t_grid[-1], 1.0)
    if dt * norm > max_step_norm:
        raise ContractViolation(
            f"step rejected: dt*|R| = {dt * norm:.3g} exceeds {max_step_norm}",
            invariant="step_size")
    f = np.diag(rho0).real.copy()
    p = gen.lattice.momenta()
    E = gen.energies
    out_p, out_E, out_tr = [], [], []
    t = 0.0
    for target in t_grid:
        n = int(round((target - t) / dt))
        for _ in range(n):
            f = _rk4(lambda v: R @ v, f, dt)
        t += n * dt
        rem = target - t
        if rem > 1e-14:
            f = _rk4(lambda v: R @ v, f, rem)
            t = target
        out_p.append(f @ p)
        out_E.append(f @ E)
        out_tr.append(f.sum())
    return np.array(out_p), np.array(out_E), np.array(out_tr)


def relaxation_rate(t, y, asymptote=0.0):
    """Exponential rate from a least-squares fit of log|y - asymptote|."""
    t = np.asarray(t, dtype=float)
    y = np.abs(np.asarray(y, dtype=float) - asymptote)
    slope, _ = np.polyfit(t, np.log(y), 1)
    return -slope
