"""Test suite for surf-select."""
