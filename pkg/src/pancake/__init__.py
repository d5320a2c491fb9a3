"""Curvature flows of rotationally symmetric convex hypersurfaces seeded by
rotated Angenent ovals, with runtime monitors for their quantitative bounds."""

from .speeds import (
    AdmissibilityReport,
    ProbeConfig,
    SpeedConstants,
    SpeedFunction,
    check_admissible,
    combine,
    constants,
    normalize,
    resolve,
)
from .geometry import (
    CurvatureData,
    Displacements,
    ProfileCurve,
    SupportProfile,
    angenent_oval,
    curvatures_from_support,
    displacements,
    embed,
    grim_reaper,
    support_from_turning_angle,
)
from .flow import FlowConfig, Trajectory, evolve_from_oval, rescaled_tail, run, step
from .diagnostics import AsymptoticFit, BoundReport, DiagnosticsRecord, evaluate

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport",
    "ProbeConfig",
    "SpeedConstants",
    "SpeedFunction",
    "check_admissible",
    "combine",
    "constants",
    "normalize",
    "resolve",
    "CurvatureData",
    "Displacements",
    "ProfileCurve",
    "SupportProfile",
    "angenent_oval",
    "curvatures_from_support",
    "displacements",
    "embed",
    "grim_reaper",
    "support_from_turning_angle",
    "FlowConfig",
    "Trajectory",
    "evolve_from_oval",
    "rescaled_tail",
    "run",
    "step",
    "AsymptoticFit",
    "BoundReport",
    "DiagnosticsRecord",
    "evaluate",
]
