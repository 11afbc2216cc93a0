"""Variance-reduced optimizers (SVRG, SAGA, SGD) with stability and risk bound checks."""

from .bounds import (BoundDomainError, BoundInputs, RegimeError, RegimeParams,
                     generalization_gap_bound, lyapunov_saga_Phi, lyapunov_svrg_U, m_factor,
                     saga_opt_convex, saga_stability_convex, saga_stability_sc, select_params,
                     svrg_opt_convex, svrg_rho_sc, svrg_stability_convex, svrg_stability_sc)
from .data import (Dataset, NeighborPair, ParseError, PreprocessError, Sample, SyntheticSpec,
                   format_libsvm, generate_synthetic, generate_synthetic_classification,
                   load_libsvm, make_neighbor, parse_libsvm, population_risk_ls, preprocess,
                   split_train)
from .harness import (AggregateStats, DataSource, DistanceTrace, ExperimentConfig, aggregate,
                      compare_bound, emit_results, run_convergence, run_coupled_stability,
                      run_epr_sweep)
from .losses import (LossModel, certify_constants, empirical_gradient, empirical_risk,
                     loss_gradient, loss_value, make_model, minimize_full_gradient)
from .optim import (DivergenceError, IndexStream, SagaConfig, SgdConfig, SvrgConfig, Trajectory,
                    average_iterate, derive_seed, saga_run, sgd_run, svrg_run)

__version__ = "0.1.0"
