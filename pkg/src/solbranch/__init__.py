"""Branching-diffusion Monte Carlo for the scrape-off layer equations."""
__version__ = "0.1.0"
