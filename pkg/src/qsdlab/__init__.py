"""Simulation and numerical-verification workbench for absorbed Markov
processes: exact jump chains and diffusion schemes, drift-condition
certificates, and three independent quasi-stationary distribution
estimators cross-checked against a uniformization oracle.
"""

from .core.measures import BinGrid, EmpiricalMeasure, tv_distance, tv_half
from .core.rng import RngStream
from .core.simulate import SimBatchConfig, TimeGrid, simulate_batch
from .birth_death import BDModel
from .feller import FellerModel
from .lyapunov import CheckCertificate, LyapunovPair
from .qsd import (
    ConvergenceReport,
    QSDEstimate,
    conditioned_mc,
    convergence_report,
    delta_measure,
    eta_profile,
    fit_decay_rate,
    fleming_viot,
    qsd_eigen_oracle,
)
from .uniformization import BoxTruncation, auto_box_size, build_truncation

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BinGrid",
    "EmpiricalMeasure",
    "tv_distance",
    "tv_half",
    "RngStream",
    "SimBatchConfig",
    "TimeGrid",
    "simulate_batch",
    "BDModel",
    "FellerModel",
    "CheckCertificate",
    "LyapunovPair",
    "ConvergenceReport",
    "QSDEstimate",
    "conditioned_mc",
    "convergence_report",
    "delta_measure",
    "eta_profile",
    "fit_decay_rate",
    "fleming_viot",
    "qsd_eigen_oracle",
    "BoxTruncation",
    "auto_box_size",
    "build_truncation",
]
