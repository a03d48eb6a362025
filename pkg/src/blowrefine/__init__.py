"""Adaptive-refinement blow-up simulator for u_t = u_xx + u^p + mu u^p / log^a(2 + u^2)."""

__version__ = "0.1.0"
