"""Reachability certificates and control synthesis for dissipative quantum systems.

Channels and generators live in the generalized Bloch picture as real
``d**2 x d**2`` matrices (:class:`SuperOpMatrix`).  The necessary conditions on
what a drift plus unrestricted Hamiltonian control can reach are in
:mod:`reachcert.criteria`; exact schedules for unital qubits are built by
:mod:`reachcert.synth`; everything else is attacked numerically by
:mod:`reachcert.search`.
"""

from reachcert.bloch import (
    HermitianBasis,
    SuperOpMatrix,
    UnitalDecomposition,
    dual,
    from_bloch,
    make_basis,
    superop_of_map,
    to_bloch,
    unital_decompose,
)
from reachcert.errors import (
    DivergedError,
    GridError,
    InvalidInputError,
    NotReachableError,
    NotTracePreservingError,
    ReachCertError,
    ScheduleError,
    ValidationError,
)
from reachcert.models import GeneratorSpec, LindbladData, lindbladian

__all__ = [
    "DivergedError",
    "GeneratorSpec",
    "GridError",
    "HermitianBasis",
    "InvalidInputError",
    "LindbladData",
    "NotReachableError",
    "NotTracePreservingError",
    "ReachCertError",
    "ScheduleError",
    "SuperOpMatrix",
    "UnitalDecomposition",
    "ValidationError",
    "dual",
    "from_bloch",
    "lindbladian",
    "make_basis",
    "superop_of_map",
    "to_bloch",
    "unital_decompose",
]

__version__ = "0.1.0"
