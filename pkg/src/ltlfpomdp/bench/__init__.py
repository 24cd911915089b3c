"""Gridworld benchmark zoo and the experiment runner."""
from .runner import N_FINAL, Experiment, ResultRow, compile_entry, emit_table, run_experiment, suite
from .zoo import SPECS, TABLE, Zoo, ZooEntry, build_all, entry_from_dict, entry_to_dict, load_zoo

__all__ = [
    "N_FINAL", "SPECS", "TABLE", "Experiment", "ResultRow", "Zoo", "ZooEntry", "build_all", "compile_entry",
    "emit_table", "entry_from_dict", "entry_to_dict", "load_zoo", "run_experiment", "suite",
]
