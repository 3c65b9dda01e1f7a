"""Configuration, sweeps, figure data and the command-line interface."""

from .config import ConfigError, SweepSpec, load_config, parse_config
from .figures import FIGURES, emit_figure_data
from .sweep import run_sweep, write_sweep

__all__ = ["ConfigError", "SweepSpec", "load_config", "parse_config", "FIGURES",
           "emit_figure_data", "run_sweep", "write_sweep", "main"]


def main(argv=None):
    from .cli import main as _main

    return _main(argv)
