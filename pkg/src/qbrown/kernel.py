"""Interaction kernels: the squared Fourier transform |t(q)|^2 of the
test particle / gas particle T-matrix, as a function of |q| only."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

KERNEL_FORMS = ("contact", "gaussian")


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic interaction kernel.

    ``contact``:  |t(q)|^2 = t0^2
    ``gaussian``: |t(q)|^2 = t0^2 exp(-q^2 / (2 sigma^2))
    """

    form: str = "contact"
    t0: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.form not in KERNEL_FORMS:
            raise DomainError(f"unknown kernel form {self.form!r}", field="form")
        if not np.isfinite(self.t0):
            raise DomainError("t0 must be finite", field="t0")
        if self.form == "gaussian" and not self.sigma > 0:
            raise DomainError("gaussian kernel needs sigma > 0", field="sigma")

    @classmethod
    def contact(cls, t0):
        return cls("contact", t0)

    @classmethod
    def gaussian(cls, t0, sigma):
        return cls("gaussian", t0, sigma)

    def t2(self, q):
        """|t(q)|^2 at momentum-transfer modulus ``q`` (array or scalar)."""
        q = np.asarray(q, dtype=float)
        if self.form == "contact":
            return np.full_like(q, self.t0 ** 2)
        return self.t0 ** 2 * np.exp(-q ** 2 / (2.0 * self.sigma ** 2))

    def to_dict(self):
        return {"form": self.form, "t0": self.t0, "sigma": self.sigma}
