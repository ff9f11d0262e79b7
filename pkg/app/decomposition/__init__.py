# Copyright (c) 2025 sprowii
"""Декомпозиция спектрограмм: переполненный NMF и DDS."""
from app.decomposition.dds import DDSResult, DDSState, components, dds_decompose, dds_loss, reconstruct
from app.decomposition.nmf import FixedDictionary, NMFResult, group_by_source, mean_dictionary, nmf_decompose
from app.decomposition.schedule import SolverResult, SolverSchedule, run_projected_adam

__all__ = [
    "DDSResult",
    "DDSState",
    "FixedDictionary",
    "NMFResult",
    "SolverResult",
    "SolverSchedule",
    "components",
    "dds_decompose",
    "dds_loss",
    "group_by_source",
    "mean_dictionary",
    "nmf_decompose",
    "reconstruct",
    "run_projected_adam",
]
