"""Simulation of autonomous error correction for a cavity-encoded qubit.

Modules: fock (operators, Hamiltonian, Wigner), codes, dynamics (Lindblad
evolution, process tomography), reset (engineered ancilla reset), grape
(optimal-control recovery pulses), protocol (correction cycles, lifetimes,
error budgets), metrology (Ramsey/Fisher analysis), cli.
"""

__version__ = "0.1.0"

from .config import DeviceParams, ExperimentSpec, default_device, load_config  # noqa: E402
from .codes import CodeSpec, binomial_lowest, code_by_name, generalized_binomial, kl_check, sqrt17  # noqa: E402

__all__ = [
    "CodeSpec",
    "DeviceParams",
    "ExperimentSpec",
    "__version__",
    "binomial_lowest",
    "code_by_name",
    "default_device",
    "generalized_binomial",
    "kl_check",
    "load_config",
    "sqrt17",
]
