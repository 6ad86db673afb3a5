"""Counterfactual inference in cyclic structural causal models.

Contraction certificates, fixed-point solving, shift-scale interventions,
twin networks and sub-Gaussian tail checks for models ``x = f(x, e)`` whose
causal graph may contain cycles.
"""
from .concentration import (LipschitzFunctional, TailBoundSpec, empirical_tail_check,
                            lipschitz_constant_solution_map, projection, scaled_difference,
                            scaled_mean, tail_bound, tail_spec_for_twin,
                            verify_noise_lipschitz_linear)
from .contraction import (ContractionCertificate, bound_expr_lipschitz, certify,
                          certify_linear, estimate_kappa_sampled, kappa_after_intervention,
                          user_asserted)
from .errors import *  # noqa: F401,F403
from .expr import eval_expr, parse_expr, to_string
from .interventions import (Intervention, apply_shift_scale, check_composition_bound,
                            compose, do, do_intervention, ss)
from .model import (ExprMechanism, LinearRow, NoiseSpec, ScmModel, expr_model, linear_model,
                    load_model, save_model, syntactic_parents, validate_model)
from .solver import (LinearMoments, SolveReport, abduct_noise_linear, iteration_bound,
                     linear_moments, linear_solve, picard_solve, sample_observational,
                     solve_subset)
from .twin import (CounterfactualMap, TwinModel, build_twin, counterfactual_aap,
                   counterfactual_map_linear, counterfactual_sample, intervene_twin,
                   verify_twin_aap_equivalence)

__version__ = "0.1.0"
