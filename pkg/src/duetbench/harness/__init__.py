from .barrier import Barrier, BarrierTimeout
from .environment import probe_environment, usable_cpus
from .runner import (ExperimentResult, HarnessError, run_duet, run_duet_fill, run_experiment,
                     run_sequential, sequential_order)

__all__ = [
    "Barrier", "BarrierTimeout", "ExperimentResult", "HarnessError", "probe_environment",
    "run_duet", "run_duet_fill", "run_experiment", "run_sequential", "sequential_order",
    "usable_cpus",
]
