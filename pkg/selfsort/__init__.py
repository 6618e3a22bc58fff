"""Self-improving sorter for inputs with hidden group dependence."""
from __future__ import annotations

__version__ = "1.0.0"
