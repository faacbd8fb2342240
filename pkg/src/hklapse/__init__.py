"""Hegselmann-Krause consensus with intermittent interaction and constant delay.

Simulation, contraction constants, and numerical certification of the
exponential consensus estimates, plus a particle-level mean-field study.
"""

from hklapse.core import (
    ClippedSinusoid,
    Constant,
    ConstantOne,
    CustomInfluence,
    CustomWeight,
    DropoutSchedule,
    OpinionState,
    RadialPower,
    RadialTable,
    SquareWave,
    WfCertificate,
    certify_wf,
    compute_M0,
    compute_psi0,
    eval_influence,
    eval_weight,
)
from hklapse.errors import (
    CertificationError,
    DomainError,
    HKError,
    IntegrationError,
    SpecError,
)
from hklapse.integrator import (
    FunctionHistory,
    PointInitial,
    SampledHistory,
    Trajectory,
    diameter,
    rhs_delayed,
    rhs_undelayed,
    simulate,
    window_diameter,
)
from hklapse.theory import (
    BoundSet,
    bound_curve,
    compare_regimes,
    constants_delayed,
    constants_undelayed,
)

__version__ = "0.1.0"

__all__ = [
    "BoundSet",
    "CertificationError",
    "ClippedSinusoid",
    "Constant",
    "ConstantOne",
    "CustomInfluence",
    "CustomWeight",
    "DomainError",
    "DropoutSchedule",
    "FunctionHistory",
    "HKError",
    "IntegrationError",
    "OpinionState",
    "PointInitial",
    "RadialPower",
    "RadialTable",
    "SampledHistory",
    "SpecError",
    "SquareWave",
    "Trajectory",
    "WfCertificate",
    "bound_curve",
    "certify_wf",
    "compare_regimes",
    "compute_M0",
    "compute_psi0",
    "constants_delayed",
    "constants_undelayed",
    "diameter",
    "eval_influence",
    "eval_weight",
    "rhs_delayed",
    "rhs_undelayed",
    "simulate",
    "window_diameter",
]
