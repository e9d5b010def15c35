"""Closed-form reference models."""
