"""Tests for the self-improving sorter."""
