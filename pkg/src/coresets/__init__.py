"""Sensitivity scores and coreset constructions."""
