"""Lohe matrix model laboratory."""
