"""Multitarget tracking with measurement-to-track associations and random finite sets.

Modules: ``models`` (single-target linear-Gaussian models), ``association``
(MTAs and their likelihoods), ``rfs`` (multitarget likelihood and set
integrals), ``labeled`` (GLMB distributions), ``glmb_filter`` (the GLMB
recursion), ``metrics`` (OSPA), ``sim`` (scenarios) and ``cli``.
"""
from .association import Mta, MapMtaTracker, TrackSet, enumerate_mtas, map_mta, mta_posterior
from .glmb_filter import BirthEntry, BirthModel, GlmbTracker, estimate_states
from .labeled import GlmbComponent, GlmbDistribution, Label, LabeledStateSet
from .metrics import OspaParams, ospa
from .models import GaussianDensity, MotionModel, SensorModel
from .rfs import MeasurementSet, StateSet, multitarget_likelihood, verify_mta_rfs_identity
from .sim import Scenario, TargetBirth, simulate

__version__ = "0.1.0"

__all__ = [
    "BirthEntry", "BirthModel", "GaussianDensity", "GlmbComponent", "GlmbDistribution", "GlmbTracker",
    "Label", "LabeledStateSet", "MapMtaTracker", "MeasurementSet", "MotionModel", "Mta", "OspaParams",
    "Scenario", "SensorModel", "StateSet", "TargetBirth", "TrackSet", "enumerate_mtas", "estimate_states",
    "map_mta", "mta_posterior", "multitarget_likelihood", "ospa", "simulate", "verify_mta_rfs_identity",
]
