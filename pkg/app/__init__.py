"""
Missing-mass risk toolkit: Good-Turing risk, minimax bounds and Monte Carlo checks.
"""
__version__ = "0.1.0"
__author__ = "Missing-mass risk maintainers"
