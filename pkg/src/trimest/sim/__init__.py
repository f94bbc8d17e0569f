"""Monte-Carlo reproduction of the reference simulation study."""

from .generate import Replication, generate_replication, simulate_arrays
from .runner import ScenarioAborted, ScenarioSummary, run_batch, run_scenario
from .scenarios import (
    ArmRates,
    Mechanism,
    Method,
    MethodKind,
    ScenarioError,
    ScenarioSpec,
    benchmark_power,
    load_batch,
    paper_suite,
)
