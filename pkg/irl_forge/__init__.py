"""
irl_forge

Revealed preference tests, Bayesian revealed preference, inverse filtering
and passive Langevin reward reconstruction.
"""

__version__ = "0.1.0"

# Submodules are imported on demand (``from irl_forge import rp``).
__all__ = [
    "bayes_agents",
    "birl",
    "cli",
    "config",
    "detect",
    "errors",
    "experiments",
    "invfilter",
    "io",
    "langevin",
    "log",
    "main_pipeline",
    "multiagent",
    "rp",
    "sim",
    "solvers",
]
