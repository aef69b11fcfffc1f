"""Escape rates of open dynamical systems through shrinking holes."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import DomainError, EscapeLabError, NumericalError, PreconditionError, ResourceError
from .escape import (
    Hole,
    OpenOperator,
    escape_rate_spectral,
    hitting_ratio,
    kac_sum,
    open_operator,
    product_gap_check,
    survival_exact,
    survival_mc,
)
from .experiments import (
    EscapeReport,
    extremal_index_analytic,
    extremal_index_empirical,
    gibbs_markov_theta,
    local_escape_experiment,
    local_escape_iterate,
    phi_coefficient,
)
from .interval import IntervalMarkovMap, ball_brackets, ball_escape_experiment, deriv_product, itinerary
from .sft import CylinderSet, PointCode, Sft, cylinder_of_point, minimal_period, set_period
from .thermo import GibbsData, Potential, cylinder_measure, gibbs_state, measure_of_set, pressure

__all__ = [
    "CylinderSet",
    "DomainError",
    "EscapeLabError",
    "EscapeReport",
    "GibbsData",
    "Hole",
    "IntervalMarkovMap",
    "NumericalError",
    "OpenOperator",
    "PointCode",
    "Potential",
    "PreconditionError",
    "ResourceError",
    "Sft",
    "ball_brackets",
    "ball_escape_experiment",
    "cylinder_measure",
    "cylinder_of_point",
    "deriv_product",
    "escape_rate_spectral",
    "extremal_index_analytic",
    "extremal_index_empirical",
    "gibbs_markov_theta",
    "gibbs_state",
    "hitting_ratio",
    "itinerary",
    "kac_sum",
    "local_escape_experiment",
    "local_escape_iterate",
    "measure_of_set",
    "minimal_period",
    "open_operator",
    "phi_coefficient",
    "pressure",
    "product_gap_check",
    "set_period",
    "survival_exact",
    "survival_mc",
]
