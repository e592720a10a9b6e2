"""Calibrators: point estimators, particle estimators and the posterior estimator.

The harness-facing registry lives in :mod:`simcal.estimators.registry`.
"""

from simcal.estimators.adr import adr_calibrate, svgd_step
from simcal.estimators.bayesopt import BayesOptState, bayesopt_calibrate
from simcal.estimators.bayessim import PosteriorModel, bayessim_train, posterior
from simcal.estimators.costs import ReplayCost
from simcal.estimators.features import FeatureSpec, featurize
from simcal.estimators.maml import MamlModel, maml_adapt, maml_metatrain
from simcal.estimators.particles import ParticleSet
from simcal.estimators.regression import RegressionModel, regress_fit, regress_predict
from simcal.estimators.simopt import SimOptDist, reps_weights, simopt_calibrate, simopt_update

__all__ = [
    "BayesOptState",
    "FeatureSpec",
    "MamlModel",
    "ParticleSet",
    "PosteriorModel",
    "RegressionModel",
    "ReplayCost",
    "SimOptDist",
    "adr_calibrate",
    "bayesopt_calibrate",
    "bayessim_train",
    "featurize",
    "maml_adapt",
    "maml_metatrain",
    "posterior",
    "regress_fit",
    "regress_predict",
    "reps_weights",
    "simopt_calibrate",
    "simopt_update",
    "svgd_step",
]
