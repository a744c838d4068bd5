"""Truncated belief-state space and the finite belief-MDP built on it.

Starting from a root belief, every action and reception outcome is expanded
breadth-first for ``n_steps`` levels. Successors of the deepest level are not
added as new nodes; they are projected onto the nearest enumerated belief in
squared error, which closes the graph.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from . import belief as bel
from ._engine import FlatTree, nearest_many
from .sources import SourceParams, partial_kernel, stationary_distribution

DEFAULT_DEDUPE = 1e-9
DEFAULT_MAX_NODES = 500_000


class ReceptionTag(enum.Enum):
    ZERO = "0"
    ONE = "1"
    NONE = "~"

    @classmethod
    def from_bit(cls, m: int) -> "ReceptionTag":
        return cls.ONE if m else cls.ZERO


@dataclass(frozen=True)
class BeliefNode:
    id: int
    belief: np.ndarray
    last_reception: ReceptionTag
    depth: int


@dataclass
class BeliefGraph:
    """Closed belief graph.

    ``edges`` is an (E, 4) float array of (state, action, successor,
    probability) rows with one row per distinct successor.
    """

    beliefs: np.ndarray
    tags: list[ReceptionTag]
    depths: np.ndarray
    edges: np.ndarray
    n_actions: int
    root_id: int = 0
    params: SourceParams | None = None
    p_s: float | None = None
    n_steps: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.beliefs)

    @property
    def nodes(self) -> list[BeliefNode]:
        return [self.node(i) for i in range(self.n_nodes)]

    def node(self, i: int) -> BeliefNode:
        return BeliefNode(i, self.beliefs[i], self.tags[i], int(self.depths[i]))

    def successors(self, state: int, action: int) -> list[tuple[float, int]]:
        e = self.edges
        rows = e[(e[:, 0] == state) & (e[:, 1] == action)]
        return [(float(r[3]), int(r[2])) for r in rows]

    @cached_property
    def tree(self) -> FlatTree:
        return FlatTree(self.beliefs)

    def project(self, b: np.ndarray, tag: ReceptionTag | None = None) -> int:
        """Id of the node closest to ``b`` in mean squared error.

        The reception tag is accepted for symmetry with the belief-state but
        does not restrict the candidates. Exact ties go to the lowest id.
        """
        return self.tree.query(np.asarray(b, dtype=float))

    def project_many(self, bs: np.ndarray) -> np.ndarray:
        bs = np.ascontiguousarray(np.atleast_2d(bs), dtype=float)
        return nearest_many(bs, *self.tree.arrays())

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.beliefs).tobytes())
        h.update(np.ascontiguousarray(self.edges).tobytes())
        h.update("".join(t.value for t in self.tags).encode())
        return h.hexdigest()[:16]

    def to_json(self) -> dict:
        params = self.params
        return {
            "K": params.k if params else None,
            "p": params.p if params else None,
            "theta": params.theta if params else None,
            "lambda": params.lam if params else None,
            "p_s": self.p_s,
            "N": self.n_steps,
            "n_actions": self.n_actions,
            "root": self.root_id,
            "nodes": [
                {"id": i, "belief": self.beliefs[i].tolist(), "tag": self.tags[i].value,
                 "depth": int(self.depths[i])}
                for i in range(self.n_nodes)
            ],
            "edges": [[int(s), int(a), int(t), float(pr)] for s, a, t, pr in self.edges],
        }

    @classmethod
    def from_json(cls, data: dict) -> "BeliefGraph":
        params = None
        if data.get("K") is not None:
            params = SourceParams(k=data["K"], p=data["p"], theta=data["theta"], lam=data["lambda"])
        nodes = sorted(data["nodes"], key=lambda n: n["id"])
        edges = np.array(data["edges"], dtype=float).reshape(-1, 4)
        return cls(
            beliefs=np.array([n["belief"] for n in nodes], dtype=float),
            tags=[ReceptionTag(n["tag"]) for n in nodes],
            depths=np.array([n["depth"] for n in nodes], dtype=np.int64),
            edges=edges,
            n_actions=data["n_actions"],
            root_id=data["root"],
            params=params,
            p_s=data["p_s"],
            n_steps=data["N"],
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "BeliefGraph":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class BeliefMDP:
    transitions: list[sparse.csr_matrix]
    costs: np.ndarray
    root_id: int = 0

    @property
    def n_states(self) -> int:
        return self.costs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.costs.shape[1]

    @classmethod
    def from_dense(cls, transitions, costs, root_id: int = 0) -> "BeliefMDP":
        """Build from an (A, S, S) array and an (S, A) cost table."""
        mdp = cls([sparse.csr_matrix(np.asarray(p, dtype=float)) for p in transitions],
                  np.asarray(costs, dtype=float), root_id)
        mdp.validate()
        return mdp

    def validate(self, tol: float = 1e-10) -> None:
        if len(self.transitions) != self.n_actions:
            raise ValueError("one transition matrix per action is required")
        for a, mat in enumerate(self.transitions):
            if mat.shape != (self.n_states, self.n_states):
                raise ValueError(f"transition matrix for action {a} has shape {mat.shape}")
            err = np.max(np.abs(np.asarray(mat.sum(axis=1)).ravel() - 1.0))
            if err > tol:
                raise ValueError(f"action {a}: rows not stochastic (max error {err:.3g})")


def _branches(b, a, kernel, p_s, predicted=None):
    if predicted is None:
        predicted = bel.predict(b, kernel)
    if a == 0:
        return [(1.0, predicted, ReceptionTag.NONE)]
    u = a - 1
    marg = bel.marginalize(b)[u]
    out = []
    if p_s < 1.0:
        out.append((1.0 - p_s, predicted, ReceptionTag.NONE))
    if p_s > 0.0:
        for m in (0, 1):
            if marg[m] > 0.0:
                out.append((p_s * marg[m], bel.condition_and_predict(b, u, m, kernel),
                            ReceptionTag.from_bit(m)))
    return out


def branch(b: np.ndarray, a: int, kernel: np.ndarray, p_s: float):
    """List of (probability, successor belief, reception tag) for action ``a``.

    Zero-probability outcomes are dropped.
    """
    if not 0.0 <= p_s <= 1.0:
        raise ValueError(f"p_s must lie in [0, 1], got {p_s}")
    return _branches(np.asarray(b, dtype=float), a, kernel, p_s)


def root_belief(kernel: np.ndarray, kind="stationary") -> np.ndarray:
    """Initial joint belief: ``"stationary"``, ``"uniform"`` or an explicit vector."""
    if isinstance(kind, str):
        if kind == "stationary":
            return stationary_distribution(kernel)
        if kind == "uniform":
            return np.full(kernel.shape[0], 1.0 / kernel.shape[0])
        raise ValueError(f"unknown root belief {kind!r}")
    return bel.check_belief(kind)


def _dedupe_level(cands, tags, eps, beliefs, node_tags, next_id):
    """Map candidate beliefs of one level to node ids.

    Candidates within ``eps`` (L2, same tag) of an existing node reuse its
    lowest such id; the remaining ones are merged greedily in order.
    Returns the id per candidate and the indices of candidates that became
    new nodes.
    """
    assign = np.full(len(cands), -1, dtype=np.int64)
    tag_values = np.array([t.value for t in tags])
    node_tag_values = np.array([t.value for t in node_tags])
    created = []
    for tag in ReceptionTag:
        cidx = np.flatnonzero(tag_values == tag.value)
        if not len(cidx):
            continue
        nidx = np.flatnonzero(node_tag_values == tag.value)
        if len(nidx):
            tree = cKDTree(beliefs[nidx])
            for ci, hits in zip(cidx, tree.query_ball_point(cands[cidx], eps)):
                hits = [h for h in hits if np.linalg.norm(beliefs[nidx[h]] - cands[ci]) < eps]
                if hits:
                    assign[ci] = nidx[hits].min()
        rest = cidx[assign[cidx] < 0]
        if not len(rest):
            continue
        pairs = cKDTree(cands[rest]).query_pairs(eps, output_type="ndarray")
        nbrs: dict[int, list[int]] = {}
        for i, j in pairs:
            if np.linalg.norm(cands[rest[i]] - cands[rest[j]]) < eps:
                lo, hi = (i, j) if i < j else (j, i)
                nbrs.setdefault(lo, []).append(hi)
        local = np.full(len(rest), -1, dtype=np.int64)
        for i in range(len(rest)):
            if local[i] >= 0:
                continue
            local[i] = i
            created.append(rest[i])
            for j in nbrs.get(i, ()):
                if local[j] < 0:
                    local[j] = i
        assign[rest] = -2 - rest[local]
    # number new nodes in candidate order
    created.sort()
    ids = {c: next_id + n for n, c in enumerate(created)}
    pending = assign < -1
    assign[pending] = [ids[-2 - v] for v in assign[pending]]
    return assign, created


def enumerate_graph(initial: np.ndarray, kernel: np.ndarray, p_s: float, n_steps: int,
                    eps: float = DEFAULT_DEDUPE, max_nodes: int = DEFAULT_MAX_NODES,
                    params: SourceParams | None = None) -> BeliefGraph:
    """Enumerate belief trajectories of ``n_steps`` levels and close the graph."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0.0 <= p_s <= 1.0:
        raise ValueError(f"p_s must lie in [0, 1], got {p_s}")
    initial = bel.check_belief(initial)
    k = bel.n_sources(initial)
    n_actions = k + 1

    beliefs = (initial / initial.sum())[None, :]
    tags = [ReceptionTag.NONE]
    depths = [0]
    edges = []
    frontier = np.array([0])

    def expand(nodes):
        rows, cands, cand_tags = [], [], []
        for src in nodes:
            b = beliefs[src]
            predicted = bel.predict(b, kernel)
            for a in range(n_actions):
                for prob, nb, tag in _branches(b, a, kernel, p_s, predicted):
                    rows.append((src, a, prob))
                    cands.append(nb)
                    cand_tags.append(tag)
        return rows, np.array(cands), cand_tags

    for depth in range(1, n_steps + 1):
        rows, cands, cand_tags = expand(frontier)
        assign, created = _dedupe_level(cands, cand_tags, eps, beliefs, tags, len(beliefs))
        if len(beliefs) + len(created) > max_nodes:
            raise RuntimeError(
                f"belief space exceeds {max_nodes} nodes at depth {depth}; "
                "use a smaller truncation depth")
        beliefs = np.vstack([beliefs, cands[created]]) if created else beliefs
        tags.extend(cand_tags[c] for c in created)
        depths.extend([depth] * len(created))
        edges.extend((s, a, d, pr) for (s, a, pr), d in zip(rows, assign))
        frontier = np.arange(len(beliefs) - len(created), len(beliefs))

    graph = BeliefGraph(
        beliefs=beliefs, tags=tags, depths=np.array(depths, dtype=np.int64),
        edges=np.zeros((0, 4)), n_actions=n_actions, params=params, p_s=p_s,
        n_steps=n_steps, meta={"eps": eps},
    )
    rows, cands, _ = expand(frontier)
    if len(rows):
        dst = graph.project_many(cands)
        edges.extend((s, a, d, pr) for (s, a, pr), d in zip(rows, dst))

    # merge parallel edges to the same successor
    acc: dict[tuple[int, int, int], float] = {}
    for s, a, d, pr in edges:
        key = (int(s), int(a), int(d))
        acc[key] = acc.get(key, 0.0) + pr
    graph.edges = np.array([(*key, pr) for key, pr in sorted(acc.items())],
                           dtype=float).reshape(-1, 4)
    return graph


def build_graph(params: SourceParams, p_s: float, n_steps: int, root="stationary",
                eps: float = DEFAULT_DEDUPE, max_nodes: int = DEFAULT_MAX_NODES) -> BeliefGraph:
    kernel = partial_kernel(params)
    graph = enumerate_graph(root_belief(kernel, root), kernel, p_s, n_steps, eps=eps,
                            max_nodes=max_nodes, params=params)
    graph.meta["root"] = root if isinstance(root, str) else "explicit"
    return graph


def project(b: np.ndarray, tag: ReceptionTag | None, graph: BeliefGraph) -> int:
    return graph.project(b, tag)


def build_mdp(graph: BeliefGraph, gamma: float,
              kind: bel.DistortionKind = bel.DistortionKind.ABSOLUTE,
              update_lag: int = 1, kernel: np.ndarray | None = None) -> BeliefMDP:
    """Finite belief-MDP over the graph nodes.

    Node beliefs describe the configuration ``update_lag`` slots back (the
    latest slot whose values a delivery can reveal), so the per-slot cost is
    the expected cost of the belief pushed ``update_lag`` steps through the
    kernel. ``kernel`` defaults to the one implied by ``graph.params``.
    """
    n = graph.n_nodes
    if n == 0:
        raise ValueError("empty graph")
    beliefs = graph.beliefs
    if update_lag:
        if kernel is None:
            if graph.params is None:
                raise ValueError("kernel required when the graph carries no parameters")
            kernel = partial_kernel(graph.params)
        beliefs = beliefs @ np.linalg.matrix_power(kernel, update_lag)
    dist = np.array([bel.expected_distortion(b, kind) for b in beliefs])
    costs = dist[:, None] + gamma * (np.arange(graph.n_actions) != 0)[None, :]
    e = graph.edges
    dst = e[:, 2].astype(np.int64)
    if len(e) and (dst.min() < 0 or dst.max() >= n):
        raise ValueError("graph is not closed: edge to an unknown node")
    mats = []
    for a in range(graph.n_actions):
        sel = e[:, 1] == a
        mats.append(sparse.csr_matrix(
            (e[sel, 3], (e[sel, 0].astype(np.int64), dst[sel])), shape=(n, n)))
    mdp = BeliefMDP(mats, costs, graph.root_id)
    try:
        mdp.validate()
    except ValueError as exc:
        raise ValueError(f"graph is not closed: {exc}") from None
    return mdp
