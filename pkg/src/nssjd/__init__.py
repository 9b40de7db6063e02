"""Non-stationary blind source separation by joint diagonalization of block covariances."""

from .asymptotics import AsymptoticCov, SeparabilityError, compute_h, expected_adapted_mdi, sigma_w_z
from .blockcov import BlockCovSet, block_covariances, population_block_covariances
from .data import RngStream, SeriesFormatError, SeriesMatrix, child_stream, load_series_csv, write_series_csv
from .estimator import JdOptions, UnmixingEstimate, nss_jd, recover_sources
from .jointdiag import JdResult, joint_diagonalize, objective_g
from .mdi import MdiReport, SignedPermutation, adapted_mdi, mdi, mdi_report, optimal_signed_permutation
from .models import (
    ModelSpec,
    PopulationMoments,
    calibrate_unit_covariance,
    check_conditions,
    generate,
    make_model,
    model1,
    model2,
    model3,
    model4,
    population_block_moments,
)
from .symlinalg import DefinitenessError, inv_sqrt_spd, off_diag_sq

__all__ = [
    "AsymptoticCov",
    "BlockCovSet",
    "DefinitenessError",
    "JdOptions",
    "JdResult",
    "MdiReport",
    "ModelSpec",
    "PopulationMoments",
    "RngStream",
    "SeparabilityError",
    "SeriesFormatError",
    "SeriesMatrix",
    "SignedPermutation",
    "UnmixingEstimate",
    "adapted_mdi",
    "block_covariances",
    "calibrate_unit_covariance",
    "check_conditions",
    "child_stream",
    "compute_h",
    "expected_adapted_mdi",
    "generate",
    "inv_sqrt_spd",
    "joint_diagonalize",
    "load_series_csv",
    "make_model",
    "mdi",
    "mdi_report",
    "model1",
    "model2",
    "model3",
    "model4",
    "nss_jd",
    "objective_g",
    "off_diag_sq",
    "optimal_signed_permutation",
    "population_block_covariances",
    "population_block_moments",
    "recover_sources",
    "sigma_w_z",
    "write_series_csv",
]
