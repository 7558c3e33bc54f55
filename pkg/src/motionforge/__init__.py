"""Rigidity analysis and motion tracking for quadratic geometric constraint systems."""

from .constraints import (
    ConstraintKind,
    ConstraintSystem,
    QuadraticConstraint,
    TrivialKind,
    evaluate,
    hessian_form,
    residual_norm,
    rigidity_matrix,
)
from .flexes import FlexChoice, find_unblocked_flex, select_flex
from .retraction import TrackerConfig, retract
from .rigidity import RigidityReport, SecondOrderStatus, analyze, second_order_verdict
from .tracker import DeformationPath, EventKind, track_path

__all__ = [
    "ConstraintKind",
    "ConstraintSystem",
    "DeformationPath",
    "EventKind",
    "FlexChoice",
    "QuadraticConstraint",
    "RigidityReport",
    "SecondOrderStatus",
    "TrackerConfig",
    "TrivialKind",
    "analyze",
    "evaluate",
    "find_unblocked_flex",
    "hessian_form",
    "residual_norm",
    "retract",
    "rigidity_matrix",
    "second_order_verdict",
    "select_flex",
    "track_path",
]
