"""Finite-dimensional approximations to Wiener measure on model Riemannian manifolds.

Paths are piecewise geodesics parametrised by development coordinates; the
G1 and G0 measures reweight Gaussian development coordinates by Gram
determinants and are compared against heat-kernel truths.
"""
__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    ConfigurationError,
    CostCapError,
    DegenerateFrameError,
    DegenerateMetricError,
    DomainError,
    GeoWienerError,
    IntegrationError,
    NoOracleError,
    NumericalError,
    UsageError,
)
from .manifolds import ChartPoint, Euclidean, Hyperbolic2, MetricManifold, Sphere2, TangentVec, Torus, make_manifold
from .paths import Partition, PathBatch, PiecewiseGeodesicPath, energy
from .frames import OrthonormalFrame, DevelopmentDriver, develop, develop_batch, brownian_sample
from .gram import grams, vol_density
from .heat_kernel import HeatKernelOracle, quad_grid
from .cylinder import BumpProduct, Constant, FlatCosine, LegendreZonal, bump
from .measures import (
    DiscreteMixture,
    EstimatorResult,
    FiniteDimMeasure,
    PointMass,
    UniformChartBox,
    convergence_sweep,
    density,
    estimate,
    estimate_many,
    free_path_estimate,
    wiener_cylinder_exact,
    wiener_mc,
)
from .ibp import CameronMartinPath, hat_h, ibp_residual
from .infinite_horizon import d_infinity, dyadic_estimate, phi_extend, trichotomy_experiment
