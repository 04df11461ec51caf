"""Charge-state cycle simulator and estimators for lead-vacancy centers in diamond."""

__version__ = "0.1.0"
