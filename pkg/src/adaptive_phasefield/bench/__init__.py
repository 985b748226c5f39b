from .benchmark import (CONVERGE_SIZES, CONVERGE_U, TABLE_PAIRS, BenchmarkSpec, ConvergencePoint,
                        RunResult, converge, default_benchmark, default_schedule, fit_modes,
                        read_convergence_csv, run_benchmark, study_h_eps)
from .cli import cli
from .fit import FitError, PowerLawFit, PowerLawRegressor, fit_power_law
from .io import CSV_COLUMNS, CsvSink, read_records_csv, read_vtk, write_records_csv, write_vtk
from ..solver import LoadStepRecord

__all__ = [
    "BenchmarkSpec", "CONVERGE_SIZES", "CSV_COLUMNS", "CONVERGE_U", "ConvergencePoint", "CsvSink", "FitError",
    "LoadStepRecord", "PowerLawFit", "PowerLawRegressor", "RunResult", "TABLE_PAIRS", "cli",
    "converge", "default_benchmark", "default_schedule", "fit_modes", "fit_power_law",
    "read_convergence_csv", "read_records_csv", "read_vtk", "run_benchmark", "study_h_eps",
    "write_records_csv", "write_vtk",
]
