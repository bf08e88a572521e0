"""spintrack: spin-noise magnetometry simulation and adaptive field tracking.

The package simulates the voltage a spin-noise magnetometer records, tracks
the time-varying Larmor frequency (hence the magnetic field) through that
voltage with an extended Kalman filter whose measurement-noise model adapts
on line, and provides the conventional spectroscopy baseline (averaged
periodogram plus Lorentzian fit) for comparison.
"""

from .core import DEFAULT_GYRO, NoiseConfig, PhysicsParams, StateVector, validate_covariance
from .errors import (FitDiverged, InvalidCovariance, InvalidParameter,
                     NonUniformSampling, NumericalFailure, OutOfRange,
                     ParseError, SchemaError, SpintrackError)
from .fields import (ConstantField, FieldModelSpec, OrnsteinUhlenbeckField,
                     PiecewiseField, RandomWalkField, WaveformField,
                     eval_piecewise, eval_waveform, omega_trajectory,
                     step_ou, step_random_walk)
from .filtering import (FilterConfig, FilterOutput, adapt_r, ekf_predict,
                        ekf_update, jacobian_f, run_filter)
from .simulate import (Trace, process_noise_cov, propagate_mean,
                       simulate_trace, synthesize_measurement, write_trace_csv)
from .spectrum import (LorentzianFit, Spectrum, fit_lorentzian,
                       sensitivity_estimate, welch_psd)
from .experiments import (AbruptConfig, SweepConfig, SweepSummary, TrackConfig,
                          compute_mse, run_abrupt_noise_scenario,
                          run_mse_sweep, run_tracking_scenario)
from .ingest import IngestSpec, load_reference_field_csv, load_trace_csv
from .config import RunConfig, load_config, resolve_config

__version__ = "0.1.0"
