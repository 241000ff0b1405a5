"""Spectral diagnostics for the linearized 2D Euler equation on the torus.

The package computes Lyapunov exponents of steady flows, assembles
Fourier-Galerkin truncations of the linearized vorticity operator, builds
approximate eigenfunctions along streamlines, and certifies by residual
measurement which spectral lines they populate.
"""

from .approxeig import (ApproxEigenfunction, BumpProfile, ResidualReport,
                        action_identity_error, build_eigenfunction, build_F,
                        choose_base_point, make_profiles, predicted_bound,
                        residual, sweep, synthesize)
from .errors import (AliasingError, CertificateError, ChartOverlapError,
                     EigensolverError, IntegrationError, InvalidInputError,
                     PreconditionError, StagnationProximityError,
                     SymmetrizationError)
from .fields import (FourierScalarField, FourierVectorField, StagnationPoint,
                     TrigVelocityField, curl, curl_inverse,
                     find_stagnation_points, preset_flow, read_field,
                     velocity_from_stream, wrap, write_field)
from .flow import (CocycleState, StreamlineChart, Trajectory, advance,
                   build_chart, flow_map, second_variation, tangent_flow,
                   tangent_map, transverse_flow)
from .lyapunov import (ExponentEstimate, RaySampleSpec, bas_max_exponent,
                       bas_trajectory, exponent_at, global_exponent,
                       higher_norm_growth, stagnation_exponents,
                       weighted_b_exponent)
from .operators import (GalerkinOperator, apply_advection, apply_coupling,
                        apply_vorticity_operator, assemble_advection,
                        assemble_coupling, assemble_velocity_operator,
                        assemble_velocity_operator_with_check,
                        assemble_vorticity_operator, gaussian_bump,
                        pushforward, semigroup_growth, sobolev_norm, spectrum)
from .orbits import (LongOrbitScan, PeriodEstimate, long_orbit_predicate,
                     longest_orbit_scan, prime_period)

__version__ = "0.1.0"
