"""Numerical laboratory for a weighted Hardy-Sobolev integral system."""
