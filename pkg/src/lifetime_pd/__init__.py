"""Forward-looking lifetime PD term structures from rating migrations.

Modules: ``ratings`` (cohort estimation, logit overlay), ``propagation``
(distribution propagation, lifetime PD), ``macro`` (scenarios, state-space
model), ``kalman`` (naive and anchored filtering, Riccati diagnostics),
``experiment`` (Monte Carlo harness) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import LifetimePDError
from .propagation import PDTermStructure, RatingDistribution, lifetime_pd
from .ratings import SensitivityMatrix, TransitionMatrix, cohort_estimate, logit_overlay

__all__ = [
    "LifetimePDError",
    "PDTermStructure",
    "RatingDistribution",
    "SensitivityMatrix",
    "TransitionMatrix",
    "__version__",
    "cohort_estimate",
    "lifetime_pd",
    "logit_overlay",
]
