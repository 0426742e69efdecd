"""Multi-dimensional QAM mappings for BICM-ID.

Mapping construction, figures of merit, BSA and random search baselines,
and a BICM-ID Monte Carlo chain (encoder, channel, demapper, BCJR).
"""

from .analysis import exit_decoder, exit_demapper, floor_bound, run_ber, tunnel_gap
from .constellation import build_qam, distance_set
from .mapping import MdMapping, build_mapping, gray_mapping, load_mapping, random_mapping, save_mapping
from .metrics import compute_metrics
from .search import SearchConfig, bsa, bsa_restarts, random_search

__version__ = "0.1.0"

__all__ = [
    "MdMapping",
    "SearchConfig",
    "bsa",
    "bsa_restarts",
    "build_mapping",
    "build_qam",
    "compute_metrics",
    "distance_set",
    "exit_decoder",
    "exit_demapper",
    "floor_bound",
    "gray_mapping",
    "load_mapping",
    "random_mapping",
    "random_search",
    "run_ber",
    "save_mapping",
    "tunnel_gap",
]
