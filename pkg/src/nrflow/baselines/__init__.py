"""Baseline tracking controllers: feedback linearization and NMPC."""
from .fbl import FBLConfig, FBLController, fbl_control, fbl_decompose, sigma_ddot
from .nmpc import (
    NMPCConfig, NMPCController, NMPCResult, iteration_time_from_log, nmpc_solve,
    size_iteration_cap,
)

__all__ = [
    "FBLConfig", "FBLController", "fbl_control", "fbl_decompose", "sigma_ddot",
    "NMPCConfig", "NMPCController", "NMPCResult", "nmpc_solve", "iteration_time_from_log",
    "size_iteration_cap",
]
