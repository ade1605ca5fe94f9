"""Convergence and Hölder regularity of stationary and level-dependent subdivision schemes."""
from .errors import *  # noqa: F401,F403
from .lattice import DilationSpec, IndexSetK, compute_index_set, coset_representatives, minimal_invariant_set
from .symbolcalc import (Mask, MaskSequence, approximate_sum_rule_verdict, defect_sequence, fit_decay,
                         normalize_sequence, sum_rule_order, symbol_derivative, symbol_eval)
from .transition import build_transition, difference_subspace, dump_matrices, parse_matrices, restrict
from .jsr import JsrResult, MatrixSet, jsr
from .regularity import analyze, convergence_check, exact_holder, holder_lower_bound, limit_rho, necessary_decay_check
from .cascade import basic_limit_samples, fourier_product, subdivide
from .schemes import builtin, matrix_fixture

__version__ = "0.1.0"
