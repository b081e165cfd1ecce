"""Test suite for panel coresets."""
