"""Particles in weak two-dimensional random potentials.

Submodules
----------
field
    Gaussian spectral and Poisson bump random fields.
coefficients
    Limit diffusion matrix, drift and angular rate from the correlation function.
dynamics
    Velocity Verlet for the Hamiltonian flow, the rescaled process and the
    limiting circle diffusion.
cutoff
    Cut-off dynamics, stopping times and path geometry checks.
stats
    Ensemble estimators and tests.
harness
    Configuration, seeding, parallel runs and output files.
"""

from .coefficients import (angular_coefficient, coefficients, diffusion_matrix, drift_vector,
                           verify_divergence_identity)
from .dynamics import (EnergyAudit, FieldDomainError, Trajectory, energy_audit, geometric_dt,
                       integrate_micro, integrate_rescaled, select_dt,
                       simulate_circle_diffusion)
from .field import (BumpFieldSpec, GaussianCorrelation, GaussianSpectralDensity,
                    PolynomialBump, SpectralFieldSpec, build_bump_field, build_spectral_field,
                    empirical_correlation, eval_field)
from .stats import (Ensemble, EnsembleSummary, angle_increment_test,
                    direction_autocorrelation, fit_decay_rate, speed_band_report, summarize)

__version__ = "0.1.0"

__all__ = [
    "angular_coefficient", "coefficients", "diffusion_matrix", "drift_vector",
    "verify_divergence_identity",
    "EnergyAudit", "FieldDomainError", "Trajectory", "energy_audit", "geometric_dt",
    "integrate_micro", "integrate_rescaled", "select_dt", "simulate_circle_diffusion",
    "BumpFieldSpec", "GaussianCorrelation", "GaussianSpectralDensity", "PolynomialBump",
    "SpectralFieldSpec", "build_bump_field", "build_spectral_field", "empirical_correlation",
    "eval_field",
    "Ensemble", "EnsembleSummary", "angle_increment_test", "direction_autocorrelation",
    "fit_decay_rate", "speed_band_report", "summarize",
]
