"""Langevin reconstruction toolkit for non-stationary volume-price series.

Pipeline: windowed log-normal fits of volume-price distributions, daily
pattern / fluctuation decomposition, stationarity and Markov diagnostics,
conditional-moment (Kramers-Moyal) estimation of the coupled drift and noise
surfaces, Euler-Maruyama simulation of the reconstructed system, and
reconstruction of the non-stationary moments.
"""

from ._backend import backend_name
from .decompose import (CubicFit, DailyPattern, FluctuationSeries, daily_pattern,
                        detrend, fit_cubic)
from .diagnostics import (AcfFit, GaussianSummary, MarkovTestResult, PawulaResult,
                          acf, acf_exponential_fit, joint_gaussian_summary,
                          markov_test, pawula_check, power_spectrum,
                          wallclock_series)
from .errors import (DecomposeError, DiagnosticsError, EstimationError, FitError,
                     IngestError, InputError, MomentOverflowError, SimulationError,
                     SurfaceFitError, VplError)
from .ingest import (ClipResult, IngestConfig, TickRecord, WindowSample,
                     clip_outliers, load_ticks, windowize)
from .kmest import (KMField, StateGrid, build_grid, conditional_moments,
                    estimate_km, extrapolate_tau)
from .lognormal import (LogNormalParams, ParamSeries, fit_all, fit_window,
                        lognormal_pdf)
from .moments import (ItoCoefficients, MomentComparison, MomentSeries,
                      empirical_moments, f_n, integrate_moment_sde,
                      ito_coefficients, moment_distributions, moments_of_path,
                      recompose)
from .sde import SimConfig, SimPath, ensemble, simulate, simulate_with_moment
from .surfaces import (REFERENCE_COVARIANCE, REFERENCE_SURFACES, CoeffSurfaces,
                       Domain, LinearForm, QuadForm, fit_drift_surfaces,
                       fit_g_surfaces, fit_surfaces, g_from_d2, refine_surfaces,
                       spd_sqrt)

__version__ = "0.1.0"
