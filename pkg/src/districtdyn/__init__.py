"""Coupled wealth dynamics of interacting firms in an industrial district."""

__version__ = "0.1.0"

from districtdyn.netmodel import (  # noqa: F401
    FinancialRecord,
    FirmNode,
    Flags,
    MarketSpec,
    ModelParams,
    Network,
    Role,
    SupplyEdge,
    humber_path,
    load_network,
)
from districtdyn.calibrate import calibrate_network, derive_params  # noqa: F401
from districtdyn.dynamics import Dynamics, FlowBreakdown  # noqa: F401
from districtdyn.integrate import SimConfig, Trajectory, simulate  # noqa: F401
from districtdyn.analyze import AnalysisReport, analyze, narrative  # noqa: F401
