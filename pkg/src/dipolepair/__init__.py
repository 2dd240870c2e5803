"""Collective fluorescence of two dipole-dipole coupled three-level atoms
in time-dependent geometries: coupling tensors, master-equation dynamics,
detector intensity, geometry ensembles and both averaging methods."""

__version__ = "0.1.0"

from .model import (PhysParams, Geometry, big_delta, flat_index, state_pair,
                    atomic_operator, product_state_density, validate_params,
                    K0_DEFAULT, SOFT_FLOOR, HARD_FLOOR)
from .couplings import (ChiTensor, CouplingSet, ConsistencyError, chi_tensor,
                        coupling_pair, cross_couplings_closed, all_couplings)
from .dynamics import (SuperoperatorTriple, Trajectory, IntegrationError,
                       build_superoperators, build_superoperators_with_drive_phase,
                       drive_phase_b, rhs, output_grid, integrate,
                       integrate_fixed_rk4)
from .observables import (LongTimeMetrics, detector_phase, intensity_y,
                          intensity_series, long_time_metrics, relative_phase)
from .ensembles import (WeightedEnsemble, singleton, distance_oscillation,
                        theta_circle, phi_circle, sphere, sphere_with_breathing,
                        flyby, from_descriptor, midpoints)
from .averaging import (AveragedCouplingSet, SweepRow, SweepResult, single_run,
                        ac_average, ap_average_couplings, ap_run, sweep)
from .config import (RunConfig, IntegratorConfig, SweepConfig, ConfigError,
                     parse_config, serialize_config, run, dump_ensemble,
                     RunOutcome)

__all__ = [name for name in dir() if not name.startswith("_")]
