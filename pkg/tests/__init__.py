"""Test suite for Multi-Agent Enterprise System."""
