"""Condensate / normal-fluid kinetics toolbox.

Radial measures, three- and four-wave weak collision functionals, the
cutoff-regularized evolution with its condensate reconstruction, and the
closed-form bound suite that audits trajectories.
"""

__version__ = "0.1.0"

from .measure import (GridSpec, MeasureError, RadialMeasure, bose_einstein,
                      mollify, moment, partial_moment, split_atom)
from .testfn import (TestFunction, by_name, cap, delta_phi, ell0_kernel,
                     ell_kernel, identity, lambda_kernel, one, phi_eps, power)
from .weakops import (FunctionalError, TransferResult, phi_capital, q3,
                      q3_linear, q3_linear_tilde, q3_pair, q3_quadratic,
                      q3_tilde, q4_full, q4_script, transfer_functional,
                      weight_w)
from .regularized import (PHIN_VERSION, DensityFn, a_n, collision_fields,
                          cutoff_antiderivative, cutoff_eval, evolution_grid,
                          j3n, k_n, l_n, production_rate, q3n_tilde)
from .evolution import (SolverConfig, SolverState, Trajectory,
                        condensate_balance, moment_envelope, reconstruct_G,
                        reconstruct_H, run_h, run_pipeline, step, time_change)
from .analysis import (BoundReport, concentration_times, critical_constant_b,
                       decay_integral_bound, decay_threshold,
                       lower_envelope_check, moment_bound_apriori,
                       origin_flux_bound, run_checks, t_star,
                       temperature_ratio, uniform_moment_bound,
                       uniform_moment_constants)
