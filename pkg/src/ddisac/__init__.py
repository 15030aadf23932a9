"""Delay-Doppler domain minimum-BER precoding for OTFS-based ISAC."""

from .kernels import BACKEND as KERNEL_BACKEND
from .metrics import NoiseModel
from .otfs import DdChannel, OtfsGrid, PathParams, PathSet
from .qam import QamConstellation
from .solver import PrecoderSolution, SolverConfig, solve_algorithm1

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "DdChannel",
    "NoiseModel",
    "OtfsGrid",
    "PathParams",
    "PathSet",
    "PrecoderSolution",
    "QamConstellation",
    "SolverConfig",
    "solve_algorithm1",
]
