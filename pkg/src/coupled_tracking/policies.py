"""Decision rules mapping the sink's run-time information to an action.

Every policy is a callable ``policy(state, rng) -> action`` with actions in
``{0, ..., K}``; ``0`` idles and ``k`` requests source ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief_space import BeliefGraph, ReceptionTag
from .rvia import PolicyTable

POLICY_KINDS = ("pomdp", "maf", "idle", "roundrobin", "random")


@dataclass
class SinkState:
    belief: np.ndarray
    last_reception: ReceptionTag
    aoi: np.ndarray
    slot: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.aoi) < 1):
            raise ValueError("AoI entries must be >= 1")


def pomdp_action(state: SinkState, table: PolicyTable, graph: BeliefGraph) -> int:
    return table.action(graph.project(state.belief, state.last_reception))


def maf_action(state: SinkState) -> int:
    # np.argmax keeps the first maximum, i.e. the lowest source index
    return int(np.argmax(state.aoi)) + 1


def baseline_action(kind: str, state: SinkState, rng: np.random.Generator | None = None) -> int:
    k = len(state.aoi)
    if kind == "idle":
        return 0
    if kind == "roundrobin":
        return state.slot % k + 1
    if kind == "random":
        return int(rng.integers(1, k + 1))
    raise ValueError(f"unknown baseline {kind!r}")


class Policy:
    name = "policy"

    def __call__(self, state: SinkState, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def act_batch(self, beliefs, tags, aoi, slot, rngs) -> np.ndarray:
        """Actions for several independent sinks sharing the same slot index."""
        return np.array([self(SinkState(b, tag, a, slot), rng)
                         for b, tag, a, rng in zip(beliefs, tags, aoi, rngs)])


class PomdpPolicy(Policy):
    name = "pomdp"

    def __init__(self, table: PolicyTable, graph: BeliefGraph):
        if len(table.actions) != graph.n_nodes:
            raise ValueError("policy table and belief graph sizes differ")
        self.table = table
        self.graph = graph

    def __call__(self, state, rng=None):
        return pomdp_action(state, self.table, self.graph)

    def act_batch(self, beliefs, tags, aoi, slot, rngs):
        return self.table.actions[self.graph.project_many(beliefs)]


class MafPolicy(Policy):
    name = "maf"

    def __call__(self, state, rng=None):
        return maf_action(state)

    def act_batch(self, beliefs, tags, aoi, slot, rngs):
        return np.argmax(aoi, axis=1) + 1


class IdlePolicy(Policy):
    name = "idle"

    def __call__(self, state, rng=None):
        return 0

    def act_batch(self, beliefs, tags, aoi, slot, rngs):
        return np.zeros(len(beliefs), dtype=np.int64)


class RoundRobinPolicy(Policy):
    name = "roundrobin"

    def __call__(self, state, rng=None):
        return baseline_action("roundrobin", state)

    def act_batch(self, beliefs, tags, aoi, slot, rngs):
        return np.full(len(beliefs), slot % aoi.shape[1] + 1)


class RandomPolicy(Policy):
    name = "random"

    def __call__(self, state, rng):
        return baseline_action("random", state, rng)


def make_policy(kind: str, table: PolicyTable | None = None,
                graph: BeliefGraph | None = None) -> Policy:
    if kind == "pomdp":
        if table is None or graph is None:
            raise ValueError("the pomdp policy needs a solved table and its graph")
        return PomdpPolicy(table, graph)
    simple = {"maf": MafPolicy, "idle": IdlePolicy, "roundrobin": RoundRobinPolicy,
              "random": RandomPolicy}
    if kind not in simple:
        raise ValueError(f"unknown policy {kind!r}; expected one of {POLICY_KINDS}")
    return simple[kind]()
