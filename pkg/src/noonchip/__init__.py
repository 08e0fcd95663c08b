"""Digital twin of a heralded two-photon interferometer chip.

Exact Fock-space optics, a pulse-level Monte Carlo of the detection
experiment, time-tag coincidence analysis, fringe fitting and phase
calibration.
"""

__version__ = "0.1.0"

from .chip import (  # noqa: E402
    DeviceConfig,
    analytic_single_photon_prob,
    analytic_two_photon_prob,
    heralded_output_state,
    noon_state,
    product_state,
    spdc_pair_state,
)
from .fock import FockState, ImpossibleHeralding, fidelity  # noqa: E402
from .fringe import FringeFit, fidelity_from_visibility, fit_fringe, visibility_minmax  # noqa: E402
from .tags import TimeTagStream  # noqa: E402

__all__ = [
    "DeviceConfig",
    "FockState",
    "FringeFit",
    "ImpossibleHeralding",
    "TimeTagStream",
    "analytic_single_photon_prob",
    "analytic_two_photon_prob",
    "fidelity",
    "fidelity_from_visibility",
    "fit_fringe",
    "heralded_output_state",
    "noon_state",
    "product_state",
    "spdc_pair_state",
    "visibility_minmax",
    "__version__",
]
