"""Constrained combinatorial semi-bandit lab for energy-efficient channel access."""
