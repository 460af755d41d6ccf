"""Robust delta hedging under transaction costs: pricing, simulation, hedging ledgers and asymptotics."""
from .errors import ConditionViolation, ConfigError, DomainError, GridResolutionWarning, NumericFailure
from .payoffs import Payoff
from .pricing import GreekSet, PricingInputs, discounted_price, greeks, pde_residuals, price

__all__ = [
    "ConditionViolation", "ConfigError", "DomainError", "GridResolutionWarning", "NumericFailure",
    "Payoff", "GreekSet", "PricingInputs", "discounted_price", "greeks", "pde_residuals", "price",
]
__version__ = "0.1.0"
