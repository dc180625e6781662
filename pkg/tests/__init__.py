"""Unit tests for Besov norms and the half-space heat solver"""
