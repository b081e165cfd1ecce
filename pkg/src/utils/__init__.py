"""Configuration, errors and random streams."""
