"""Regression objectives and solvers."""
