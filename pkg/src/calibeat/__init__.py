"""Calibeating: online forecasting procedures that beat the refinement score
of given side forecasts, together with exact score ledgers, game solvers and
an experiment harness."""

__version__ = "0.1.0"
