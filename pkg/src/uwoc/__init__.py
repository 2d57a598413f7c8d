"""Cellular underwater wireless optical CDMA simulation toolkit.

Subsystems: signature codes (ooc), the underwater optical channel
(channel), relay and MIMO link error rates (ber), received-signal-strength
localization (locate), cell power control (power), inter-cell backhaul
signaling (backhaul), and the scenario runner behind the uwoc-sim CLI
(scenario).
"""

__version__ = "0.1.0"

from .scenario import (  # noqa: E402
    KINDS,
    SCHEMAS,
    Scenario,
    load_scenario,
    run_scenario,
    validate,
    write_csv,
)

__all__ = [
    "KINDS",
    "SCHEMAS",
    "Scenario",
    "load_scenario",
    "run_scenario",
    "validate",
    "write_csv",
    "__version__",
]
