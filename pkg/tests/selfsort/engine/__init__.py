"""Tests for the sorting engine library."""
