"""MCMC kernels over partitions: tgMCMC, marginal Gibbs and split-merge."""
from .baselines import (gibbs_sweep, gibbs_weights, marginal_gibbs_iteration,
                        split_merge_iteration, split_merge_proposal, subset_wrap)
from .state import (ChainState, FlatPartition, MoveOutcome, MoveStats, joint_log_prob,
                    optimal_u, resample_u)
from .tgmcmc import (global_move, iteration_log_r, local_move_sweep, merge_log_prob,
                     propose_global, split_log_prob, tgmcmc_iteration)

__all__ = [
    "ChainState", "FlatPartition", "MoveOutcome", "MoveStats", "joint_log_prob",
    "optimal_u", "resample_u", "global_move", "propose_global", "local_move_sweep",
    "tgmcmc_iteration", "iteration_log_r", "split_log_prob", "merge_log_prob",
    "gibbs_sweep", "gibbs_weights", "marginal_gibbs_iteration", "split_merge_iteration",
    "split_merge_proposal", "subset_wrap",
]
