"""Splitting primal-dual proximity algorithms with a CT test harness."""

from .linop import (ComposedOperator, DiagonalMetric, DiagonalOperator, Grad2D,
                    Identity, LinearOperator, Shape, SparseMatrix,
                    StackedOperator, build_preconditioners, grad_2d,
                    power_iteration, read_matrix_market, stack,
                    write_matrix_market)
from .prox import (GroupL12, IndicatorBox, IndicatorNonneg, L1, L2Norm,
                   ProxFunction, SqL2, Zero, conjugate_prox_via_moreau,
                   group_soft_threshold, pair_group_steps, prox_l2norm,
                   prox_shifted_l1, prox_shifted_sql2, soft_threshold)
from .solver import (DivergenceError, FixedSteps, HistoryRecord,
                     PreconditionedSteps, Problem, SolveResult, StepSizeError,
                     StopRule, default_fixed_steps, objective_value,
                     saddle_gap_report, solve)
from .tomo import (SHEPP_LOGAN_ELLIPSES, CtModelSpec, Geometry, TomoProblem,
                   add_noise, build_ct_problem, default_ray_count,
                   paralleltomo, ray_chords, read_pgm, read_vector_csv,
                   render_ellipses, shepp_logan, snr_db, write_pgm,
                   write_vector_csv)

__version__ = "0.1.0"
