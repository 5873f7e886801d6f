"""swimlab: a numerical laboratory for a multi-part swimmer in a viscous box.

The package couples an incompressible Navier-Stokes solver on a MAC
grid to a small swimmer whose parts move with the locally averaged
flow, driven by internal rotational and elastic forces. On top of the
forward model it provides control sensitivities (a linearized solver
plus a Volterra displacement equation), small-time displacement
predictions, and local-reachability experiments.
"""

__version__ = "0.1.0"

from .core import (
    BodyShape,
    DomainSpec,
    MarginReport,
    SwimmerState,
    characteristic_mask,
    configuration_margins,
    coverage_measure,
    thickness_ratios,
    validate_configuration,
)

__all__ = [
    "BodyShape",
    "DomainSpec",
    "MarginReport",
    "SwimmerState",
    "characteristic_mask",
    "configuration_margins",
    "coverage_measure",
    "thickness_ratios",
    "validate_configuration",
    "__version__",
]
