"""Conformal prediction wrapped around ensemble sparse system identification."""
