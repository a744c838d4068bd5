"""Average-cost relative value iteration and policy-evaluation oracles."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .belief_space import BeliefMDP


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-7
    max_iterations: int = 100_000
    reference_state: int | None = None  # None means the MDP root

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class PolicyTable:
    actions: np.ndarray
    rho: float
    h: np.ndarray
    iterations: int
    converged: bool
    span: float
    rho_bounds: tuple[float, float] = (np.nan, np.nan)
    meta: dict = field(default_factory=dict)

    def action(self, state: int) -> int:
        return int(self.actions[state])

    def to_json(self) -> dict:
        return {
            "actions": self.actions.tolist(),
            "rho": self.rho,
            "rho_bounds": list(self.rho_bounds),
            "h": self.h.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "span": self.span,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PolicyTable":
        return cls(
            actions=np.array(data["actions"], dtype=np.int64),
            rho=data["rho"],
            h=np.array(data["h"], dtype=float),
            iterations=data["iterations"],
            converged=data["converged"],
            span=data["span"],
            rho_bounds=tuple(data["rho_bounds"]),
            meta=data.get("meta", {}),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "PolicyTable":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _q_values(mdp: BeliefMDP, h: np.ndarray) -> np.ndarray:
    return mdp.costs + np.column_stack([p @ h for p in mdp.transitions])


def greedy(q: np.ndarray) -> np.ndarray:
    """Row-wise argmin with ties (up to rounding) going to the lowest action."""
    qmin = q.min(axis=1, keepdims=True)
    tol = 1e-12 * np.maximum(1.0, np.abs(qmin))
    return np.argmax(q <= qmin + tol, axis=1)


def solve(mdp: BeliefMDP, cfg: SolverConfig = SolverConfig()) -> PolicyTable:
    """Relative value iteration with span-seminorm stopping.

    The reported ``rho`` is the midpoint of the last bracket
    ``[min(Th - h), max(Th - h)]``, which contains the optimal average cost.
    """
    ref = mdp.root_id if cfg.reference_state is None else cfg.reference_state
    if not 0 <= ref < mdp.n_states:
        raise ValueError(f"reference state {ref} out of range")
    h = np.zeros(mdp.n_states)
    lo = hi = np.nan
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        q = _q_values(mdp, h)
        th = q.min(axis=1)
        diff = th - h
        lo, hi = float(diff.min()), float(diff.max())
        h_prev = h
        h = th - th[ref]
        if hi - lo < cfg.epsilon:
            converged = True
            break
    # greedy policy with respect to the last relative values used
    actions = greedy(_q_values(mdp, h_prev))
    return PolicyTable(
        actions=actions, rho=0.5 * (lo + hi), h=h, iterations=it, converged=converged,
        span=hi - lo, rho_bounds=(lo, hi),
    )


def policy_matrix(mdp: BeliefMDP, policy) -> sparse.csr_matrix:
    policy = np.asarray(policy)
    if policy.shape != (mdp.n_states,):
        raise ValueError("policy must assign an action to every state")
    out = sparse.csr_matrix((mdp.n_states, mdp.n_states))
    for a, mat in enumerate(mdp.transitions):
        mask = (policy == a).astype(float)
        if mask.any():
            out = out + sparse.diags(mask) @ mat
    return out.tocsr()


def policy_evaluate(mdp: BeliefMDP, policy, tol: float = 1e-12,
                    max_iter: int = 10_000_000) -> float:
    """Long-run average cost of a stationary policy started at the root.

    Power iteration on the lazy chain (I + P) / 2 from the root's point mass
    converges to the root's limiting occupancy even when the policy-induced
    chain is periodic or has several recurrent classes.
    """
    policy = np.asarray(policy, dtype=np.int64)
    p = policy_matrix(mdp, policy)
    pt = p.T.tocsr()
    cost = mdp.costs[np.arange(mdp.n_states), policy]
    d = np.zeros(mdp.n_states)
    d[mdp.root_id] = 1.0
    for _ in range(max_iter):
        step = pt @ d
        if np.max(np.abs(step - d)) < tol:
            break
        d = 0.5 * (d + step)
    else:
        raise RuntimeError("policy evaluation did not converge")
    d /= d.sum()
    return float(d @ cost)


def _batch_gains(mdp: BeliefMDP, policies: np.ndarray) -> np.ndarray:
    """Unichain gains for many policies at once; NaN where the solve is singular."""
    s = mdp.n_states
    dense = np.stack([m.toarray() for m in mdp.transitions])  # (A, S, S)
    rows = np.arange(s)
    p = dense[policies, rows[None, :], :]  # (n, S, S)
    c = mdp.costs[rows[None, :], policies]
    a = np.transpose(np.eye(s)[None] - p, (0, 2, 1)).copy()
    a[:, -1, :] = 1.0
    rhs = np.zeros(s)
    rhs[-1] = 1.0
    out = np.full(len(policies), np.nan)
    cond = np.linalg.cond(a)
    ok = np.isfinite(cond) & (cond < 1e10)
    if ok.any():
        pi = np.linalg.solve(a[ok], np.broadcast_to(rhs, (ok.sum(), s))[..., None])[..., 0]
        out[ok] = np.einsum("ns,ns->n", pi, c[ok])
    return out


def brute_force_best(mdp: BeliefMDP, max_states: int = 12) -> tuple[np.ndarray, float]:
    """Exhaustive search over deterministic stationary policies.

    Policies whose chain is unichain are scored with one batched linear
    solve; the rest fall back to ``policy_evaluate``.
    """
    if mdp.n_states > max_states:
        raise ValueError(f"{mdp.n_states} states exceeds the brute-force limit of {max_states}")
    best_cost, best_policy = np.inf, None
    all_policies = itertools.product(range(mdp.n_actions), repeat=mdp.n_states)
    while True:
        chunk = np.array(list(itertools.islice(all_policies, 20_000)), dtype=np.int64)
        if not len(chunk):
            break
        gains = _batch_gains(mdp, chunk)
        for i in np.flatnonzero(np.isnan(gains)):
            gains[i] = policy_evaluate(mdp, chunk[i])
        i = int(np.argmin(gains))
        if gains[i] < best_cost - 1e-12:
            best_cost, best_policy = float(gains[i]), chunk[i]
    return best_policy, best_cost
