"""Marginal-productivity indices for real-state restless bandit projects."""
