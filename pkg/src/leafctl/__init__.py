"""Closed-loop stiffness control for sequentially printed leaf stacks.

Subpackages and modules:

  model        shared domain types, validation, JSON/CSV wire formats
  filter       scalar posterior recursions, steady-state analysis, oracle
  control      equal-split allocation and the next-density law
  calibration  process-model fitting from bending-test data
  simulate     seeded stochastic simulator and Monte Carlo comparison
  session      event-sourced live print sessions
  service      local JSON-over-HTTP interface to sessions
  cli          command-line entry point (``leafctl``)
  fixtures     canonical bench data and synthetic generators
  rng          counter-based deterministic random variates
"""

from .model import BeliefState, BuildPlan, BuildTrace, ProcessModel

__all__ = ["BeliefState", "BuildPlan", "BuildTrace", "ProcessModel"]

__version__ = "0.1.0"
