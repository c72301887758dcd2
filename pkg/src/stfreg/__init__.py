"""Spatio-temporal functional regression.

Scalar response on two functional predictors with a bilinear interaction
kernel, spatially correlated residuals (QGLS), separable space-time kriging
of the predictor curves, leave-one-out model selection and nested F tests.
"""

__version__ = "0.1.0"

from .basis import BasisSpec, CoefficientVector, KernelCoefficients, SampledCurve, TimeDomain
from .regression import Dataset, FittedModel, coefficient_functions, ols_fit, predict, qgls_fit
from .selection import CvConfig, FunctionalData, loocv_score, nested_anova, select_model
from .variogram import SiteLocation, VariogramModel

__all__ = [
    "BasisSpec",
    "CoefficientVector",
    "CvConfig",
    "Dataset",
    "FittedModel",
    "FunctionalData",
    "KernelCoefficients",
    "SampledCurve",
    "SiteLocation",
    "TimeDomain",
    "VariogramModel",
    "coefficient_functions",
    "loocv_score",
    "nested_anova",
    "ols_fit",
    "predict",
    "qgls_fit",
    "select_model",
]
