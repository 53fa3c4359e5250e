"""Position, momentum and ladder operators as dense matrices in a truncated
number basis, and the two equivalent forms of the Brownian-limit generator.

Double-commutator form (per Cartesian direction)::

    L[rho] = -D_pp/hbar^2 [x, [x, rho]] - D_xx/hbar^2 [p, [p, rho]]
             - i gamma/hbar [x, {p, rho}]

Ladder form, with a = sqrt(2)/lam (x + i lam^2/(4 hbar) p) and
lam = sqrt(hbar^2 beta / M)::

    L[rho] = -D_pp lam^2/(4 hbar^2) [a^2 - a^dag^2, rho]
             + D_pp lam^2/hbar^2 (a rho a^dag - 1/2 {a^dag a, rho})

The two agree exactly when D_xx = (beta hbar/4M)^2 D_pp and
gamma = (beta/2M) D_pp.  Truncation only corrupts the top levels of x^2 and
p^2, so every identity is checked on an interior block.
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import DomainError
from .fp_brownian import FPCoefficients

INTERIOR_MARGIN = 2


class Form(str, Enum):
    DOUBLE_COMMUTATOR = "DoubleCommutator"
    EXPLICIT_LINDBLAD = "ExplicitLindblad"


@dataclass(frozen=True)
class TruncatedOperator:
    matrix: np.ndarray
    label: str = "custom"
    interior_margin: int = INTERIOR_MARGIN


def ladder_scale(beta, M, hbar=1.0):
    return np.sqrt(hbar ** 2 * beta / M)


def build_ladder(N, beta, M, hbar=1.0):
    """Return truncated X, P, A, A^dag (as :class:`TruncatedOperator`)."""
    if N < 8:
        raise DomainError("truncation N must be >= 8", field="N")
    if not (beta > 0 and M > 0 and hbar > 0):
        raise DomainError("beta, M and hbar must be > 0", field="beta")
    lam = ladder_scale(beta, M, hbar)
    A = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1).astype(complex)
    Ad = A.conj().T
    X = lam / (2 * np.sqrt(2)) * (A + Ad)
    P = -1j * np.sqrt(2) * hbar / lam * (A - Ad)
    return tuple(TruncatedOperator(m, lab) for m, lab in
                 ((X, "X"), (P, "P"), (A, "A"), (Ad, "ADag")))


def interior_mask(N, dims=1, margin=INTERIOR_MARGIN):
    """Boolean mask over the N**dims basis states with every level < N - margin."""
    n = np.arange(N) < N - margin
    mask = n
    for _ in range(dims - 1):
        mask = np.logical_and.outer(mask, n).ravel()
    return mask


def interior(mat, N, dims=1, margin=INTERIOR_MARGIN):
    m = interior_mask(N, dims, margin)
    return mat[np.ix_(m, m)]


def _embed(op, axis, dims, N):
    eye = np.eye(N)
    out = np.ones((1, 1))
    for k in range(dims):
        out = np.kron(out, op if k == axis else eye)
    return out


@dataclass(frozen=True)
class GeneratorForm:
    """One of the two generator forms on a ``dims``-direction tensor
    product of truncated oscillators with ``N`` levels each."""

    form: Form
    coeffs: FPCoefficients
    N: int = 24
    dims: int = 1

    def __post_init__(self):
        try:
            object.__setattr__(self, "form", Form(self.form))
        except ValueError:
            raise DomainError(f"unknown form {self.form!r}", field="form") from None
        if self.dims not in (1, 2):
            raise DomainError("dims must be 1 or 2", field="dims")
        if self.N < 8 or self.N > 24:
            raise DomainError("N must lie in [8, 24]", field="N")

    @property
    def size(self):
        return self.N ** self.dims

    @property
    def lam(self):
        c = self.coeffs
        return ladder_scale(c.beta, c.M, c.hbar)

    def operators(self):
        """Per-direction lists (X_i, P_i, A_i) on the full tensor space."""
        c = self.coeffs
        X, P, A, _ = (o.matrix for o in build_ladder(self.N, c.beta, c.M, c.hbar))
        return ([_embed(X, i, self.dims, self.N) for i in range(self.dims)],
                [_embed(P, i, self.dims, self.N) for i in range(self.dims)],
                [_embed(A, i, self.dims, self.N) for i in range(self.dims)])


def _comm(a, b):
    return a @ b - b @ a


def _acomm(a, b):
    return a @ b + b @ a


def _dc(c, hbar, Xs, Ps, rho):
    out = np.zeros_like(rho, dtype=complex)
    for X, P in zip(Xs, Ps):
        out -= c.D_pp_eff / hbar ** 2 * _comm(X, _comm(X, rho))
        out -= c.D_xx_eff / hbar ** 2 * _comm(P, _comm(P, rho))
        out -= 1j * c.gamma_eff / hbar * _comm(X, _acomm(P, rho))
    return out


def _lind(c, hbar, lam, As, rho):
    out = np.zeros_like(rho, dtype=complex)
    k = c.D_pp_eff * lam ** 2 / hbar ** 2
    for A in As:
        Ad = A.conj().T
        out -= 0.25 * k * _comm(A @ A - Ad @ Ad, rho)
        out += k * (A @ rho @ Ad - 0.5 * _acomm(Ad @ A, rho))
    return out


def _dc_adj(c, hbar, Xs, Ps, obs):
    out = np.zeros_like(obs, dtype=complex)
    for X, P in zip(Xs, Ps):
        out -= c.D_pp_eff / hbar ** 2 * _comm(X, _comm(X, obs))
        out -= c.D_xx_eff / hbar ** 2 * _comm(P, _comm(P, obs))
        out += 1j * c.gamma_eff / hbar * _acomm(P, _comm(X, obs))
    return out


def _lind_adj(c, hbar, lam, As, obs):
    out = np.zeros_like(obs, dtype=complex)
    k = c.D_pp_eff * lam ** 2 / hbar ** 2
    for A in As:
        Ad = A.conj().T
        out += 0.25 * k * _comm(A @ A - Ad @ Ad, obs)
        out += k * (Ad @ obs @ A - 0.5 * _acomm(Ad @ A, obs))
    return out


def _check_square(spec, mat, name):
    mat = np.asarray(mat)
    if mat.shape != (spec.size, spec.size):
        raise DomainError(f"{name} has shape {mat.shape}, expected {(spec.size, spec.size)}",
                          field=name)
    return mat


def apply_form(spec, rho, ops=None):
    """Dissipative action L[rho] of the chosen form (no free commutator).

    ``ops`` overrides the (X_i, P_i, A_i) lists, e.g. with transformed
    operators for covariance checks.
    """
    rho = _check_square(spec, rho, "rho")
    Xs, Ps, As = spec.operators() if ops is None else ops
    hbar = spec.coeffs.hbar
    if spec.form is Form.DOUBLE_COMMUTATOR:
        return _dc(spec.coeffs, hbar, Xs, Ps, rho)
    return _lind(spec.coeffs, hbar, spec.lam, As, rho)


def adjoint_apply(spec, obs, ops=None):
    """Heisenberg-picture action L'[obs]; the friction term appears as
    +i gamma/hbar {p, [x, obs]}."""
    obs = _check_square(spec, obs, "obs")
    Xs, Ps, As = spec.operators() if ops is None else ops
    hbar = spec.coeffs.hbar
    if spec.form is Form.DOUBLE_COMMUTATOR:
        return _dc_adj(spec.coeffs, hbar, Xs, Ps, obs)
    return _lind_adj(spec.coeffs, hbar, spec.lam, As, obs)


# ---------------------------------------------------------------------------
# transforms


@dataclass(frozen=True)
class Translate:
    a: float = 0.0


@dataclass(frozen=True)
class Rotate2D:
    theta: float = 0.0


def transformed_operators(spec, transform):
    Xs, Ps, As = spec.operators()
    I = np.eye(spec.size)
    if isinstance(transform, Translate):
        shift = np.broadcast_to(np.asarray(transform.a, float), (spec.dims,))
        lam = spec.lam
        Xs = [X + s * I for X, s in zip(Xs, shift)]
        As = [A + np.sqrt(2) / lam * s * I for A, s in zip(As, shift)]
        return Xs, Ps, As
    if isinstance(transform, Rotate2D):
        if spec.dims != 2:
            raise DomainError("Rotate2D needs dims = 2", field="dims")
        c, s = np.cos(transform.theta), np.sin(transform.theta)

        def rot(v):
            return [c * v[0] - s * v[1], s * v[0] + c * v[1]]

        return rot(Xs), rot(Ps), rot(As)
    raise DomainError(f"unknown transform {transform!r}", field="transform")


def random_hermitian(n, rng, unit_trace=True):
    h = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (h + h.conj().T)
    if unit_trace:
        h /= np.trace(h).real if abs(np.trace(h)) > 1e-3 else 1.0
    return h / np.abs(h).max()


def random_interior_hermitian(spec, rng, margin=2 * INTERIOR_MARGIN):
    """Random Hermitian matrix supported on the interior block."""
    mask = interior_mask(spec.N, spec.dims, margin)
    h = np.zeros((spec.size, spec.size), dtype=complex)
    h[np.ix_(mask, mask)] = random_hermitian(int(mask.sum()), rng, unit_trace=False)
    return h


def covariance_check(spec, transform, n_samples=3, seed=0):
    """max over random Hermitian rho of |L_transformed[rho] - L[rho]|_max / |rho|_max."""
    rng = np.random.default_rng(seed)
    ops = transformed_operators(spec, transform)
    worst = 0.0
    for _ in range(n_samples):
        rho = random_hermitian(spec.size, rng)
        diff = apply_form(spec, rho, ops) - apply_form(spec, rho)
        worst = max(worst, float(np.abs(diff).max() / np.abs(rho).max()))
    return worst


def equivalence_residual(coeffs, N=24, dims=1, n_samples=3, seed=0, margin=2 * INTERIOR_MARGIN):
    """Largest interior |L_dc[rho] - L_lind[rho]|_max / |rho|_max over random
    Hermitian rho, together with the same quantity on the excluded band
    (truncation leakage)."""
    rng = np.random.default_rng(seed)
    dc = GeneratorForm(Form.DOUBLE_COMMUTATOR, coeffs, N, dims)
    li = GeneratorForm(Form.EXPLICIT_LINDBLAD, coeffs, N, dims)
    ops = dc.operators()
    mask = interior_mask(N, dims, margin)
    inner, leak = 0.0, 0.0
    for _ in range(n_samples):
        rho = random_hermitian(dc.size, rng)
        diff = np.abs(apply_form(dc, rho, ops) - apply_form(li, rho, ops)) / np.abs(rho).max()
        inner = max(inner, float(diff[np.ix_(mask, mask)].max()))
        band = ~np.logical_and.outer(mask, mask)
        leak = max(leak, float(diff[band].max()))
    return inner, leak


def duality_gap(spec, n_samples=3, seed=0):
    """max |Tr(L'[A] rho) - Tr(A L[rho])| / (|A| |rho|) for random
    interior-supported Hermitian A and rho (Frobenius norms)."""
    rng = np.random.default_rng(seed)
    ops = spec.operators()
    worst = 0.0
    for _ in range(n_samples):
        A = random_interior_hermitian(spec, rng)
        rho = random_interior_hermitian(spec, rng)
        lhs = np.trace(adjoint_apply(spec, A, ops) @ rho)
        rhs = np.trace(A @ apply_form(spec, rho, ops))
        worst = max(worst, float(abs(lhs - rhs) / (np.linalg.norm(A) * np.linalg.norm(rho))))
    return worst


def default_coefficients(beta=1.0, M=1.0, hbar=1.0, D_pp=1.0):
    """Unit-scale coefficients satisfying the exact relations."""
    return FPCoefficients.from_dpp(D_pp, M, beta, hbar, dim=1)


def broken_coefficients(coeffs, gamma_scale=1.1):
    """Negative control: friction rescaled so gamma/D_pp != beta/2M."""
    return replace(coeffs, gamma=coeffs.gamma * gamma_scale)


def verify_report(coeffs=None, N=24, N2=12, seed=0):
    """Residuals of the operator-algebra identities as a flat dict; ``N2``
    is the per-direction truncation of the 2D rotation check."""
    coeffs = default_coefficients() if coeffs is None else coeffs
    eq, leak = equivalence_residual(coeffs, N, 1, seed=seed)
    neg, _ = equivalence_residual(broken_coefficients(coeffs), N, 1, seed=seed)
    dc1 = GeneratorForm(Form.DOUBLE_COMMUTATOR, coeffs, N, 1)
    n2 = N2
    dc2 = GeneratorForm(Form.DOUBLE_COMMUTATOR, coeffs, n2, 2)
    li2 = GeneratorForm(Form.EXPLICIT_LINDBLAD, coeffs, n2, 2)
    return {
        "residual_equivalence": eq,
        "residual_negative_control": neg,
        "residual_translate": covariance_check(dc1, Translate(3.7), seed=seed),
        "residual_rotate": max(covariance_check(dc2, Rotate2D(np.pi / 5), seed=seed),
                               covariance_check(li2, Rotate2D(np.pi / 5), seed=seed)),
        "duality_gap": max(duality_gap(dc1, seed=seed),
                           duality_gap(GeneratorForm(Form.EXPLICIT_LINDBLAD, coeffs, N, 1),
                                       seed=seed)),
        "truncation_leakage": leak,
    }
