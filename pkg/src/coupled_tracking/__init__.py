"""Pull-based remote tracking of partially coupled binary Markov sources.

The modules follow the data flow of an experiment:

- ``sources``: joint transition kernels and ground-truth sampling
- ``belief``: the sink's joint belief, its updates, and cost functions
- ``belief_space``: truncated belief graph and the finite belief-MDP
- ``rvia``: relative value iteration and evaluation oracles
- ``policies``: POMDP-based, max-age-first and diagnostic policies
- ``simulation``: seeded Monte-Carlo runs on the true system
- ``experiments``: figure sweeps, artifact cache and the command line
"""
from .belief import (DistortionKind, condition_and_predict, expected_cost,
                     expected_distortion, marginalize, ml_estimate, predict, true_cost)
from .belief_space import (BeliefGraph, BeliefMDP, ReceptionTag, build_graph, build_mdp,
                           enumerate_graph, project, root_belief)
from .policies import SinkState, make_policy
from .rvia import PolicyTable, SolverConfig, brute_force_best, policy_evaluate, solve
from .simulation import SimConfig, SimResult, run_episode, run_replications
from .sources import (JointConfig, SourceParams, coupled_kernel, independent_kernel,
                      partial_kernel, sample_next, stationary_distribution)

__all__ = [
    "BeliefGraph", "BeliefMDP", "DistortionKind", "JointConfig", "PolicyTable",
    "ReceptionTag", "SimConfig", "SimResult", "SinkState", "SolverConfig", "SourceParams",
    "brute_force_best", "build_graph", "build_mdp", "condition_and_predict",
    "coupled_kernel", "enumerate_graph", "expected_cost", "expected_distortion",
    "independent_kernel", "make_policy", "marginalize", "ml_estimate", "partial_kernel",
    "policy_evaluate", "predict", "project", "root_belief", "run_episode",
    "run_replications", "sample_next", "solve", "stationary_distribution", "true_cost",
]
