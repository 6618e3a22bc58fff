"""Test fixtures for selfsort tests."""
