"""Self-improving sorting engine library."""
