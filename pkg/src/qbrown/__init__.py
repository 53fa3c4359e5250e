"""Test-particle dynamics in an ideal quantum gas: dynamic structure
factors, a completely positive momentum-lattice master equation and its
Brownian (Fokker-Planck) limit."""

__version__ = "0.1.0"

from .errors import ContractViolation, DomainError, ResourceError
from .gas_dsf import DsfModel, GasSpec, Statistics, evaluate_dsf
from .kernel import KernelSpec
