"""Congestion-aware routing and rebalancing for autonomous mobility-on-demand
fleets on capacitated road networks."""

__version__ = "0.1.0"
