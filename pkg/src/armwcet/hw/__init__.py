"""Hardware timing model: configuration, cache kernels and the cycle function."""

from .config import HwConfig, load_config, parse_config, render_config
from .model import Cache, HwState, cache_insert, cache_lookup, hw_init, run_trace, run_warm, tick

__all__ = [
    "HwConfig", "load_config", "parse_config", "render_config",
    "Cache", "HwState", "cache_insert", "cache_lookup", "hw_init", "run_trace", "run_warm", "tick",
]
