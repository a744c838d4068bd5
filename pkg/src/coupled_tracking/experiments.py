"""Figure sweeps, the artifact cache, and the command-line front end.

A point is one (policy, parameter set) pair: build the kernel and the belief
graph, solve the belief-MDP when the policy needs it, and run seeded
replications on the true system. Points are emitted as CSV rows with the
columns in ``CSV_COLUMNS``; every row echoes the full parameter set.

The JSON config accepted by ``--config`` uses the long flag names as keys::

    {"k": 2, "p": 0.8, "theta": 0.5, "lambda": 0.4, "ps": 0.8, "gamma": 0.15,
     "n": 6, "policy": "maf", "distortion": "absolute", "horizon": 100000,
     "seeds": 10, "out": "point.csv", "figure": null, "cache_dir": null,
     "sweep": null, "values": null, "update_lag": 1, "workers": 1}

Flags given on the command line override values from the file.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .belief import DistortionKind
from .belief_space import DEFAULT_DEDUPE, BeliefGraph, build_graph, build_mdp
from .policies import POLICY_KINDS, make_policy
from .rvia import PolicyTable, SolverConfig, solve
from .simulation import SimConfig, run_replications
from .sources import SourceParams

log = logging.getLogger(__name__)

CSV_COLUMNS = ("policy", "K", "p", "theta", "lambda", "p_s", "gamma", "N", "seeds", "T",
               "mean_cost", "stderr_cost", "mean_distortion", "mean_transmissions")
SWEEP_VARS = ("lambda", "gamma", "p_s", "p")
FIGURES = ("fig2", "fig3", "fig4", "fig5")
DEFAULT_SEEDS = 10
DEFAULT_HORIZON = 100_000
# bump when the on-disk layout of cached artifacts changes
CACHE_VERSION = 1


@dataclass(frozen=True)
class ExperimentSpec:
    k: int = 2
    p: float = 0.8
    theta: float = 0.5
    lam: float = 0.4
    p_s: float = 0.8
    gamma: float = 0.15
    n_steps: int = 6
    policy: str = "pomdp"
    kind: DistortionKind = DistortionKind.ABSOLUTE
    horizon: int = DEFAULT_HORIZON
    seeds: tuple[int, ...] = tuple(range(DEFAULT_SEEDS))
    sweep: str | None = None
    values: tuple[float, ...] = ()
    out: str | None = None
    cache_dir: str | None = None
    update_lag: int = 1
    warmup: int = 0
    root: str = "stationary"
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("N must be >= 1")
        if self.policy not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICY_KINDS}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.sweep is not None:
            if self.sweep not in SWEEP_VARS:
                raise ValueError(f"sweep variable must be one of {SWEEP_VARS}")
            for v in self.values:
                self.at(v)  # raises on out-of-range values
        # validates k, p, theta, lambda, p_s, gamma and the horizon
        self.sim_config()

    @property
    def params(self) -> SourceParams:
        return SourceParams(self.k, self.p, self.theta, self.lam)

    def sim_config(self) -> SimConfig:
        return SimConfig(self.params, self.p_s, self.gamma, self.horizon, seed=self.seeds[0],
                         kind=self.kind, warmup=self.warmup, root=self.root,
                         update_lag=self.update_lag)

    def at(self, value: float | None) -> "ExperimentSpec":
        """Copy with the sweep variable set to ``value``."""
        if value is None or self.sweep is None:
            return self
        name = {"lambda": "lam", "p_s": "p_s", "gamma": "gamma", "p": "p"}[self.sweep]
        return replace(self, **{name: float(value), "sweep": None, "values": ()})


# ---------------------------------------------------------------------------
# artifact cache

def cache_key(kind: str, params: dict) -> str:
    blob = json.dumps({"kind": kind, "version": CACHE_VERSION, **params}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def cache(kind: str, key: str, cache_dir) -> Path:
    """Path of the cached ``kind`` artifact with the given key."""
    if kind not in ("graph", "policy"):
        raise ValueError(f"unknown artifact kind {kind!r}")
    return Path(cache_dir) / f"{kind}-{key}.json"


def _atomic_dump(obj: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


# in-process memo so sweeps over gamma reuse one graph even without a cache dir
_MEMO: dict[tuple[str, str], object] = {}


def _load_or_build(kind: str, params: dict, loader, builder, cache_dir):
    key = cache_key(kind, params)
    if (kind, key) in _MEMO:
        return _MEMO[(kind, key)]
    obj = None
    path = cache(kind, key, cache_dir) if cache_dir else None
    if path is not None and path.exists():
        try:
            with open(path) as fh:
                obj = loader(json.load(fh))
            log.info("loaded %s from %s", kind, path)
        except Exception as exc:  # corrupt or truncated file
            warnings.warn(f"cached {kind} at {path} is unreadable ({exc}); rebuilding")
            obj = None
    if obj is None:
        obj = builder()
        if path is not None:
            _atomic_dump(obj.to_json(), path)
    _MEMO[(kind, key)] = obj
    return obj


def clear_memo() -> None:
    _MEMO.clear()


def graph_params(spec: ExperimentSpec) -> dict:
    return {"K": spec.k, "p": spec.p, "theta": spec.theta, "lambda": spec.lam,
            "p_s": spec.p_s, "N": spec.n_steps, "root": spec.root, "eps": DEFAULT_DEDUPE}


def get_graph(spec: ExperimentSpec) -> BeliefGraph:
    def build():
        return build_graph(spec.params, spec.p_s, spec.n_steps, root=spec.root)
    return _load_or_build("graph", graph_params(spec), BeliefGraph.from_json, build,
                          spec.cache_dir)


def get_policy(spec: ExperimentSpec, graph: BeliefGraph | None = None) -> PolicyTable:
    graph = get_graph(spec) if graph is None else graph
    params = {**graph_params(spec), "graph": graph.digest(), "gamma": spec.gamma,
              "distortion": spec.kind.value, "update_lag": spec.update_lag,
              "solver": asdict(spec.solver)}

    def build():
        table = solve(build_mdp(graph, spec.gamma, spec.kind, spec.update_lag), spec.solver)
        table.meta.update({"graph": graph.digest(), "params": graph_params(spec),
                           "gamma": spec.gamma, "distortion": spec.kind.value,
                           "update_lag": spec.update_lag})
        return table
    return _load_or_build("policy", params, PolicyTable.from_json, build, spec.cache_dir)


# ---------------------------------------------------------------------------
# points and figures

@dataclass
class PointResult:
    row: dict
    converged: bool | None = None
    rho: float | None = None
    error: str | None = None

    @property
    def status(self) -> str:
        if self.error:
            return "error"
        if self.converged is False:
            return "not_converged"
        return "ok"

    def as_json(self) -> dict:
        return {**self.row, "status": self.status, "rho": self.rho, "error": self.error}


def _row(spec: ExperimentSpec, mean=None, stderr=None) -> dict:
    nan = float("nan")
    mean = mean or {}
    stderr = stderr or {}
    return {
        "policy": spec.policy, "K": spec.k, "p": spec.p, "theta": spec.theta,
        "lambda": spec.lam, "p_s": spec.p_s, "gamma": spec.gamma, "N": spec.n_steps,
        "seeds": len(spec.seeds), "T": spec.horizon,
        "mean_cost": mean.get("avg_cost", nan),
        "stderr_cost": stderr.get("avg_cost", nan),
        "mean_distortion": mean.get("avg_distortion", nan),
        "mean_transmissions": mean.get("avg_transmissions", nan),
    }


def run_point(spec: ExperimentSpec, value: float | None = None) -> PointResult:
    """Evaluate one point; failures are recorded in the result, not raised.

    Solver non-convergence still simulates the greedy policy of the last
    iterate and is flagged through ``PointResult.status``.
    """
    spec = spec.at(value)
    table = None
    try:
        if spec.policy == "pomdp":
            graph = get_graph(spec)
            table = get_policy(spec, graph)
            if not table.converged:
                log.warning("RVIA did not converge (span %.3g after %d iterations)",
                            table.span, table.iterations)
            policy = make_policy("pomdp", table, graph)
        else:
            policy = make_policy(spec.policy)
        summary = run_replications(spec.sim_config(), policy, spec.seeds)
    except Exception as exc:
        log.error("point failed: %s", exc)
        return PointResult(_row(spec), error=f"{type(exc).__name__}: {exc}")
    return PointResult(_row(spec, summary.mean, summary.stderr),
                       converged=None if table is None else bool(table.converged),
                       rho=None if table is None else float(table.rho))


def figure_specs(name: str, base: ExperimentSpec | None = None) -> list[ExperimentSpec]:
    """Grid of a figure in output order: curve parameter, policy, x-axis value."""
    base = replace(base or ExperimentSpec(), sweep=None, values=())
    policies = ("maf", "pomdp")
    out = []
    if name == "fig2":
        for k in (2, 3):
            for pol in policies:
                for lam in (0.1, 0.3, 0.5, 0.7, 0.9):
                    out.append(replace(base, k=k, p=0.8, p_s=0.8, gamma=0.15, lam=lam,
                                       policy=pol))
    elif name == "fig3":
        gammas = [round(0.05 * i, 2) for i in range(11)]
        for lam in (0.4, 0.8):
            for pol in policies:
                for g in gammas:
                    out.append(replace(base, k=2, p=0.8, p_s=0.8, lam=lam, gamma=g, policy=pol))
    elif name == "fig4":
        for k in (2, 3):
            for pol in policies:
                for ps in (0.2, 0.4, 0.6, 0.8, 1.0):
                    out.append(replace(base, k=k, p=0.8, lam=0.6, gamma=0.05, p_s=ps,
                                       policy=pol))
    elif name == "fig5":
        for ps in (0.2, 0.8):
            for pol in policies:
                for p in (0.1, 0.3, 0.5, 0.7, 0.9):
                    out.append(replace(base, k=2, lam=0.4, gamma=0.05, p_s=ps, p=p, policy=pol))
    else:
        raise ValueError(f"unknown figure {name!r}; expected one of {FIGURES}")
    return out


def _map(specs, workers: int):
    if workers <= 1:
        return [run_point(s) for s in specs]
    # executor.map yields in submission order, which keeps rows in grid order
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, specs))


def run_figure(name: str, base: ExperimentSpec | None = None, out=None,
               workers: int = 1) -> list[PointResult]:
    results = _map(figure_specs(name, base), workers)
    if out is not None:
        write_csv(results, out)
    return results


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> list[PointResult]:
    if spec.sweep is None:
        return [run_point(spec)]
    return _map([spec.at(v) for v in spec.values], workers)


# ---------------------------------------------------------------------------
# output

def format_value(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def csv_text(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        row = r.row if isinstance(r, PointResult) else r
        writer.writerow([format_value(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(results, out) -> None:
    """Write the CSV and, next to a file target, a ``.status.json`` sidecar."""
    text = csv_text(results)
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    status = [r.as_json() for r in results if isinstance(r, PointResult)]
    path.with_suffix(".status.json").write_text(json.dumps(status, indent=1))


# ---------------------------------------------------------------------------
# command line

_FILE_KEYS = {"k", "p", "theta", "lambda", "ps", "gamma", "n", "policy", "distortion",
              "horizon", "seeds", "out", "figure", "cache_dir", "sweep", "values",
              "update_lag", "workers", "warmup"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="python -m coupled_tracking",
        description="Run one experiment point, a sweep, or a full figure grid.")
    ap.add_argument("--config", help="JSON file with default values for the flags below")
    ap.add_argument("--k", type=int, help="number of sources K")
    ap.add_argument("--p", type=float, help="self-transition probability p")
    ap.add_argument("--theta", type=float, help="mixed-state pull probability theta")
    ap.add_argument("--lambda", dest="lambda_", type=float, help="coupling factor lambda")
    ap.add_argument("--ps", type=float, help="delivery probability p_s")
    ap.add_argument("--gamma", type=float, help="transmission cost gamma")
    ap.add_argument("--n", type=int, help="truncation depth N")
    ap.add_argument("--policy", choices=POLICY_KINDS)
    ap.add_argument("--distortion", choices=[d.value for d in DistortionKind])
    ap.add_argument("--horizon", type=int, help="slots per replication T")
    ap.add_argument("--seeds", help="seed count (e.g. 10) or comma list (e.g. 3,5,8)")
    ap.add_argument("--out", help="CSV output path; '-' or absent writes to stdout")
    ap.add_argument("--figure", choices=FIGURES, help="run a full figure grid")
    ap.add_argument("--cache-dir", dest="cache_dir", help="directory for cached graphs/policies")
    ap.add_argument("--sweep", choices=SWEEP_VARS, help="parameter swept over --values")
    ap.add_argument("--values", help="comma list of sweep values")
    ap.add_argument("--update-lag", dest="update_lag", type=int,
                    help="slots between a sampled value and its delivery (default 1)")
    ap.add_argument("--warmup", type=int, help="initial slots excluded from averages")
    ap.add_argument("--workers", type=int, help="parallel worker processes (default 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def parse_seeds(value) -> tuple[int, ...]:
    if isinstance(value, int):
        return tuple(range(value))
    if isinstance(value, (list, tuple)):
        return tuple(int(s) for s in value)
    text = str(value).strip()
    if "," in text:
        return tuple(int(s) for s in text.split(",") if s.strip())
    return tuple(range(int(text)))


def _floats(value) -> tuple[float, ...]:
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return tuple(float(v) for v in str(value).split(",") if v.strip())


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, the JSON config file, and explicit flags (in that order)."""
    opts = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        unknown = set(data) - _FILE_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        opts.update(data)
    flags = vars(args).copy()
    flags["lambda"] = flags.pop("lambda_")
    for key in _FILE_KEYS:
        if flags.get(key) is not None:
            opts[key] = flags[key]
    return opts


def spec_from_options(opts: dict) -> ExperimentSpec:
    base = ExperimentSpec.__dataclass_fields__
    kw = {}
    mapping = {"k": "k", "p": "p", "theta": "theta", "lambda": "lam", "ps": "p_s",
               "gamma": "gamma", "n": "n_steps", "policy": "policy", "horizon": "horizon",
               "out": "out", "cache_dir": "cache_dir", "sweep": "sweep",
               "update_lag": "update_lag", "warmup": "warmup"}
    for src, dst in mapping.items():
        if opts.get(src) is not None:
            kw[dst] = opts[src]
    if opts.get("distortion") is not None:
        kw["kind"] = DistortionKind(opts["distortion"])
    if opts.get("seeds") is not None:
        kw["seeds"] = parse_seeds(opts["seeds"])
    if opts.get("values") is not None:
        kw["values"] = _floats(opts["values"])
    for name in ("k", "n_steps", "horizon", "update_lag", "warmup"):
        if name in kw:
            kw[name] = int(kw[name])
    assert set(kw) <= set(base)
    return ExperimentSpec(**kw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        spec = spec_from_options(opts)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    workers = int(opts.get("workers") or 1)
    if opts.get("figure"):
        results = run_figure(opts["figure"], spec, workers=workers)
    else:
        if spec.sweep is not None and not spec.values:
            print("error: --sweep needs --values", file=sys.stderr)
            return 2
        results = run_sweep(spec, workers)
    write_csv(results, spec.out)
    return 1 if any(r.error for r in results) else 0
