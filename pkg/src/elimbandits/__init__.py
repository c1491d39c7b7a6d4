"""Fixed-confidence pure exploration with elimination-based stopping and sampling."""

from .allocation import (GameSolution, best_response, characteristic_value,
                         info_value, optimal_weights, track)
from .harness import (ExperimentConfig, RunRecord, emit, gen_example_g,
                      gen_linear_f2_large, gen_linear_f2_small,
                      gen_unstructured, run_batch, run_single, simulate)
from .model import (BanditInstance, RngStream, Statistics, sample_reward,
                    unstructured_instance)
from .problems import (NaiveEliminationMonitor, PieceEvaluator, ProblemSpec,
                       answer_of, boundary_tie, inf_llr_piece, init_active,
                       is_stopped, naive_inf_llr, pieces_of,
                       update_active_full, update_active_selective)
from .samplers import (GameLearnerSampler, OracleSampler, SamplerSettings,
                       TrackAndStopSampler, confidence_width, make_sampler)
from .stopping import (ResetSchedule, SamplingSets, StoppingMonitor,
                       Threshold, alpha, beta, monitor_step,
                       sampling_sets_step)

__all__ = [
    "BanditInstance", "RngStream", "Statistics", "sample_reward",
    "unstructured_instance", "ProblemSpec", "answer_of", "boundary_tie",
    "pieces_of", "inf_llr_piece", "naive_inf_llr", "init_active",
    "update_active_selective", "update_active_full", "is_stopped",
    "NaiveEliminationMonitor", "PieceEvaluator", "Threshold", "beta", "alpha",
    "StoppingMonitor", "monitor_step", "ResetSchedule", "SamplingSets",
    "sampling_sets_step", "GameSolution", "info_value", "best_response",
    "optimal_weights", "characteristic_value", "track", "SamplerSettings",
    "OracleSampler", "TrackAndStopSampler", "GameLearnerSampler",
    "confidence_width", "make_sampler", "ExperimentConfig", "RunRecord",
    "simulate", "run_single", "run_batch", "emit", "gen_linear_f2_small",
    "gen_linear_f2_large", "gen_unstructured", "gen_example_g",
]
