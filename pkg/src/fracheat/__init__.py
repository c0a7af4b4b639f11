"""Spectral toolkit for the fractional parabolic operator (d/dt - Delta_g)^s
on closed manifolds with computable spectra, plus a local source-to-solution
inverse harness."""

__version__ = "0.1.0"

from .errors import (ConstructionError, ContractError, FracheatError,
                     NumericalError, TruncationWarning, UsageError)
from .manifolds import (EigenSystem, FlatTorus, VariableCircle,
                        build_eigensystem, inner_product)
from .fields import (Cylinder, FrequencyField, SpaceTimeField, TimeGrid,
                     from_frequency, restrict, sobolev_norm, to_frequency,
                     truncate_time)
from .operators import (SpectralMultiplier, apply_H_minus_s, apply_Hs,
                        apply_Hs_adjoint, apply_multiplier, causality_check,
                        frac_power, heat_semigroup_apply, inv_frac_power,
                        semigroup)
from .balakrishnan import (BalakrishnanQuadrature, balakrishnan_apply,
                           fractional_symbol_quadrature, gamma_inverse_apply)
from .heat import (HeatKernelEvaluator, gaussian_envelope_fit, heat_kernel,
                   kernel_Ks, representation_apply)
from .solve import (SolveReport, SourceFunction, bilinear_form, bump_source,
                    solve, verify_wellposedness)
from .harness import (DistinguishReport, ModelPairHarness,
                      SourceToSolutionMap, kernel_compare,
                      local_parabolic_power, make_sts, moment_sequence,
                      nodes_in_box, phi_eta, tilde_solution_check,
                      time_integrated_flow)
