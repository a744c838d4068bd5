"""Seeded Monte-Carlo evaluation of a policy on the true system.

Slot ``t`` runs in this order:

1. the sink forms ``Xhat(t)`` from its belief pushed ``update_lag`` steps ahead;
2. the policy picks ``a(t)``;
3. the true cost ``C(t)`` is accumulated;
4. if ``a(t) = k`` the update arrives with probability ``p_s`` and carries
   ``X_k(t - update_lag)``;
5. the sources move to ``X(t + 1)``;
6. the belief is conditioned on the delivery (if any) and propagated;
7. AoI of the delivered source resets to 1, all others grow by 1.

Random numbers come from one ``numpy`` generator per episode, drawn in a
fixed order: the ``update_lag + 1`` initial configurations, then ``T``
source-transition uniforms, then ``T`` channel uniforms, then whatever a
randomized policy draws during the run.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _engine
from . import belief as bel
from .belief_space import ReceptionTag, root_belief
from .policies import (IdlePolicy, MafPolicy, Policy, PomdpPolicy, RandomPolicy,
                       RoundRobinPolicy)
from .sources import SourceParams, bit_table, partial_kernel


@dataclass(frozen=True)
class SimConfig:
    params: SourceParams
    p_s: float
    gamma: float
    horizon: int
    seed: int = 0
    kind: bel.DistortionKind = bel.DistortionKind.ABSOLUTE
    warmup: int = 0
    root: str = "stationary"
    update_lag: int = 1

    def __post_init__(self):
        if not 0.0 <= self.p_s <= 1.0:
            raise ValueError("p_s must lie in [0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.warmup < 0 or self.horizon <= self.warmup:
            raise ValueError("need horizon > warmup >= 0")
        if self.update_lag < 0:
            raise ValueError("update_lag must be nonnegative")


@dataclass
class SimResult:
    avg_cost: float
    avg_distortion: float
    avg_transmissions: float
    aoi_mean: list[float]
    seed: int
    horizon: int
    warmup: int = 0
    total_true_cost: float = 0.0

    def as_row(self) -> dict:
        return {
            "seed": self.seed, "T": self.horizon, "warmup": self.warmup,
            "avg_cost": self.avg_cost, "avg_distortion": self.avg_distortion,
            "avg_transmissions": self.avg_transmissions,
            "aoi_mean": list(self.aoi_mean),
        }


@dataclass
class ReplicationSummary:
    mean: dict[str, float]
    stderr: dict[str, float]
    results: list[SimResult] = field(default_factory=list)

    @property
    def seeds(self) -> list[int]:
        return [r.seed for r in self.results]


@dataclass
class SlotRecord:
    """What happened in one slot of the first replication (for inspection)."""

    t: int
    x: int
    xhat: int
    action: int
    delivered: bool
    value: int | None
    belief: np.ndarray


def _simulate_numpy(cfg: SimConfig, policy: Policy, seeds, kernel=None,
                    initial_belief=None, trace: list | None = None) -> list[SimResult]:
    """Reference engine: all seeds advance slot by slot together in numpy.

    Works with any ``Policy``. Each episode owns its generator, so its
    random stream does not depend on which other seeds share the batch.
    When ``trace`` is a list, one ``SlotRecord`` per slot of the first seed
    is appended to it.
    """
    params = cfg.params
    k, n_cfg = params.k, params.n_configs
    if kernel is None:
        kernel = partial_kernel(params)
    if initial_belief is None:
        initial_belief = root_belief(kernel, cfg.root)
    initial_belief = bel.check_belief(initial_belief)
    seeds = [int(s) for s in seeds]
    n_rep, horizon, lag = len(seeds), cfg.horizon, cfg.update_lag
    rngs = [np.random.default_rng(s) for s in seeds]

    bits = bit_table(k)
    weights = 1 << np.arange(k - 1, -1, -1)
    cdf = np.cumsum(kernel, axis=1)
    lag_kernel = np.linalg.matrix_power(kernel, lag)
    table = np.array([[np.mean(bel.distortion(bits[x], bits[y], cfg.kind)) for y in range(n_cfg)]
                      for x in range(n_cfg)])

    def step(x, u):
        rows = cdf[x]
        nxt = (rows <= (u * rows[:, -1])[:, None]).sum(axis=1)
        return np.minimum(nxt, n_cfg - 1)

    # history[:, 0] = X(t - lag), history[:, -1] = X(t)
    init_cdf = np.cumsum(initial_belief)
    history = np.empty((n_rep, lag + 1), dtype=np.int64)
    source_u = np.empty((n_rep, horizon))
    channel_u = np.empty((n_rep, horizon))
    for r, rng in enumerate(rngs):
        u0 = rng.random()
        history[r, 0] = min(int(np.searchsorted(init_cdf, u0 * init_cdf[-1], side="right")),
                            n_cfg - 1)
        for j in range(1, lag + 1):
            history[r, j] = step(history[r, j - 1:j], np.array([rng.random()]))[0]
        source_u[r] = rng.random(horizon)
        channel_u[r] = rng.random(horizon)

    beliefs = np.tile(initial_belief, (n_rep, 1))
    tags = [ReceptionTag.NONE] * n_rep
    aoi = np.ones((n_rep, k), dtype=np.int64)
    reps = np.arange(n_rep)

    dist_sum = np.zeros(n_rep)
    cost_sum = np.zeros(n_rep)
    n_tx = np.zeros(n_rep, dtype=np.int64)
    aoi_sum = np.zeros((n_rep, k))
    for t in range(horizon):
        x = history[:, -1]
        ones = (beliefs @ lag_kernel) @ bits
        xhat = (ones - (1.0 - ones) > bel.TIE_TOL) @ weights
        a = np.asarray(policy.act_batch(beliefs, tags, aoi, t, rngs), dtype=np.int64)
        if a.min() < 0 or a.max() > k:
            raise ValueError(f"policy returned an invalid action in slot {t}")
        if t >= cfg.warmup:
            d = table[x, xhat]
            dist_sum += d
            cost_sum += d + cfg.gamma * (a != 0)
            n_tx += a != 0
            aoi_sum += aoi
        delivered = (a != 0) & (channel_u[:, t] < cfg.p_s)
        src = np.maximum(a - 1, 0)
        value = bits[history[:, 0], src]
        if trace is not None:
            trace.append(SlotRecord(t, int(x[0]), int(xhat[0]), int(a[0]), bool(delivered[0]),
                                    int(value[0]) if delivered[0] else None,
                                    beliefs[0].copy()))
        history = np.roll(history, -1, axis=1)
        history[:, -1] = step(x, source_u[:, t])
        if delivered.any():
            keep = ~delivered[:, None] | (bits.T[src] == value[:, None])
            beliefs = np.where(keep, beliefs, 0.0)
            mass = beliefs.sum(axis=1)
            if np.any(mass[delivered] <= 0.0):
                raise ValueError("delivered value has zero probability under the sink belief")
            beliefs = beliefs / mass[:, None]
        beliefs = beliefs @ kernel
        total = beliefs.sum(axis=1)
        if np.any(np.abs(total - 1.0) > bel.DRIFT_TOL):
            raise FloatingPointError("sink belief drifted off the simplex")
        beliefs = beliefs / total[:, None]
        aoi += 1
        aoi[reps[delivered], src[delivered]] = 1
        tags = [ReceptionTag.from_bit(int(value[r])) if delivered[r] else ReceptionTag.NONE
                for r in range(n_rep)]

    n = horizon - cfg.warmup
    out = []
    for r in range(n_rep):
        avg_dist = float(dist_sum[r] / n)
        avg_tx = float(n_tx[r] / n)
        out.append(SimResult(
            avg_cost=avg_dist + cfg.gamma * avg_tx,
            avg_distortion=avg_dist,
            avg_transmissions=avg_tx,
            aoi_mean=(aoi_sum[r] / n).tolist(),
            seed=seeds[r],
            horizon=horizon,
            warmup=cfg.warmup,
            total_true_cost=float(cost_sum[r]),
        ))
    return out


_MODES = {IdlePolicy: _engine.MODE_IDLE, MafPolicy: _engine.MODE_MAF,
          RoundRobinPolicy: _engine.MODE_ROUNDROBIN, RandomPolicy: _engine.MODE_RANDOM,
          PomdpPolicy: _engine.MODE_TABLE}


def _simulate_compiled(cfg: SimConfig, policy: Policy, seeds, kernel=None,
                       initial_belief=None) -> list[SimResult]:
    params = cfg.params
    k, n_cfg = params.k, params.n_configs
    if kernel is None:
        kernel = partial_kernel(params)
    if initial_belief is None:
        initial_belief = root_belief(kernel, cfg.root)
    initial_belief = np.ascontiguousarray(bel.check_belief(initial_belief), dtype=float)
    kernel = np.ascontiguousarray(kernel, dtype=float)
    mode = _MODES[type(policy)]
    lag = cfg.update_lag
    bits = np.ascontiguousarray(bit_table(k), dtype=np.int64)
    cdf = np.cumsum(kernel, axis=1)
    lag_kernel = np.linalg.matrix_power(kernel, lag)
    table = np.array([[np.mean(bel.distortion(bits[x], bits[y], cfg.kind)) for y in range(n_cfg)]
                      for x in range(n_cfg)])
    if mode == _engine.MODE_TABLE:
        tree_arrays = policy.graph.tree.arrays()
        actions = np.ascontiguousarray(policy.table.actions, dtype=np.int64)
    else:
        tree_arrays = _engine.FlatTree(initial_belief[None, :]).arrays()
        actions = np.zeros(1, dtype=np.int64)
    init_cdf = np.cumsum(initial_belief)

    out = []
    for seed in seeds:
        seed = int(seed)
        rng = np.random.default_rng(seed)
        history = np.empty(lag + 1, dtype=np.int64)
        history[0] = min(int(np.searchsorted(init_cdf, rng.random() * init_cdf[-1],
                                             side="right")), n_cfg - 1)
        for j in range(1, lag + 1):
            row = cdf[history[j - 1]]
            history[j] = min(int((row <= rng.random() * row[-1]).sum()), n_cfg - 1)
        source_u = rng.random(cfg.horizon)
        channel_u = rng.random(cfg.horizon)
        if mode == _engine.MODE_RANDOM:
            rand_actions = rng.integers(1, k + 1, size=cfg.horizon)
        else:
            rand_actions = np.zeros(1, dtype=np.int64)
        dist_sum, cost_sum, n_tx, aoi_sum, status = _engine.run_episode_loop(
            kernel, cdf, lag_kernel, bits, table, initial_belief, history, source_u,
            channel_u, rand_actions, mode, float(cfg.p_s), float(cfg.gamma), int(cfg.warmup),
            bel.TIE_TOL, bel.DRIFT_TOL, actions, *tree_arrays)
        if status == _engine.ERR_ZERO_MASS:
            raise ValueError("delivered value has zero probability under the sink belief")
        if status == _engine.ERR_DRIFT:
            raise FloatingPointError("sink belief drifted off the simplex")
        n = cfg.horizon - cfg.warmup
        avg_dist = dist_sum / n
        avg_tx = n_tx / n
        out.append(SimResult(
            avg_cost=avg_dist + cfg.gamma * avg_tx,
            avg_distortion=avg_dist,
            avg_transmissions=avg_tx,
            aoi_mean=(aoi_sum / n).tolist(),
            seed=seed,
            horizon=cfg.horizon,
            warmup=cfg.warmup,
            total_true_cost=cost_sum,
        ))
    return out


def _simulate(cfg, policy, seeds, kernel=None, initial_belief=None, engine="auto"):
    if engine == "auto":
        engine = "compiled" if type(policy) in _MODES else "numpy"
    if engine == "compiled":
        return _simulate_compiled(cfg, policy, seeds, kernel, initial_belief)
    if engine == "numpy":
        return _simulate_numpy(cfg, policy, seeds, kernel, initial_belief)
    raise ValueError(f"unknown engine {engine!r}")


def run_episode(cfg: SimConfig, policy: Policy, kernel: np.ndarray | None = None,
                initial_belief: np.ndarray | None = None, engine: str = "auto",
                trace: list | None = None) -> SimResult:
    """Simulate one seeded episode.

    ``engine="compiled"`` runs the built-in policies in a compiled loop;
    ``"numpy"`` is the reference implementation and accepts any policy.
    Passing a ``trace`` list records every slot and implies the numpy engine.
    """
    if trace is not None:
        if engine == "compiled":
            raise ValueError("slot traces are only recorded by the numpy engine")
        return _simulate_numpy(cfg, policy, [cfg.seed], kernel, initial_belief, trace)[0]
    return _simulate(cfg, policy, [cfg.seed], kernel, initial_belief, engine)[0]


_METRICS = ("avg_cost", "avg_distortion", "avg_transmissions")


def run_replications(cfg: SimConfig, policy: Policy, seeds, kernel=None,
                     initial_belief=None, engine: str = "auto") -> ReplicationSummary:
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    results = _simulate(cfg, policy, seeds, kernel, initial_belief, engine)
    mean, stderr = {}, {}
    for m in _METRICS:
        vals = np.array([getattr(r, m) for r in results])
        mean[m] = float(vals.mean())
        stderr[m] = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return ReplicationSummary(mean, stderr, results)
