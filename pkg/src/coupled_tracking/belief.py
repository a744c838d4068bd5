"""Joint belief over source configurations, its updates, and cost functions.

Source indices are zero-based here (``u = 0`` is source 1); actions keep the
one-based convention where ``a = k`` requests source ``k`` and ``a = 0`` idles.
"""
from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np

from .sources import bit_table

SIMPLEX_TOL = 1e-10
DRIFT_TOL = 1e-8
# marginals closer than this count as a tie, which resolves to 0
TIE_TOL = 1e-12


class DistortionKind(enum.Enum):
    INDICATOR = "indicator"
    ABSOLUTE = "absolute"
    SQUARED = "squared"


@lru_cache(maxsize=None)
def _bits(n_configs: int) -> np.ndarray:
    k = n_configs.bit_length() - 1
    table = bit_table(k)
    table.setflags(write=False)
    return table


def n_sources(b: np.ndarray) -> int:
    n = len(b)
    if n < 2 or n & (n - 1):
        raise ValueError(f"belief length must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


def check_belief(b, tol: float = SIMPLEX_TOL) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    n_sources(b)
    if np.any(b < -tol) or np.any(b > 1 + tol):
        raise ValueError("belief entries must lie in [0, 1]")
    if abs(b.sum() - 1.0) > tol:
        raise ValueError(f"belief does not sum to one (sum={b.sum():.12g})")
    return b


def _normalize(b: np.ndarray) -> np.ndarray:
    total = b.sum()
    if abs(total - 1.0) > DRIFT_TOL:
        raise FloatingPointError(f"belief drifted off the simplex (sum={total:.12g})")
    return b / total


def marginalize(b: np.ndarray) -> np.ndarray:
    """Per-source marginals as a (K, 2) array of [Pr(X_k=0), Pr(X_k=1)]."""
    ones = b @ _bits(len(b))
    return np.column_stack([1.0 - ones, ones])


def ml_estimate(marginals: np.ndarray) -> np.ndarray:
    return (marginals[:, 1] - marginals[:, 0] > TIE_TOL).astype(np.int64)


def predict(b: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return _normalize(b @ kernel)


def restrict(b: np.ndarray, u: int, m: int) -> np.ndarray:
    """Condition the joint belief on ``X_u = m`` (no propagation)."""
    mask = _bits(len(b))[:, u] == m
    mass = b[mask].sum()
    if mass <= 0.0:
        raise ValueError(f"observation X_{u + 1}={m} has zero probability under the belief")
    out = np.where(mask, b, 0.0)
    return out / mass


def condition_and_predict(b: np.ndarray, u: int, m: int, kernel: np.ndarray) -> np.ndarray:
    return predict(restrict(b, u, m), kernel)


def marginal_update(b: np.ndarray, kernel: np.ndarray, u: int | None = None,
                    m: int | None = None) -> np.ndarray:
    """Next-slot marginals from the double sum over prior and successor sets.

    With ``u`` left as None this is the no-reception update; otherwise the
    prior sum runs over configurations with ``X_u = m``, renormalized. Written
    loop-wise on purpose so it stays independent of the vectorized path.
    """
    bits = _bits(len(b))
    k = bits.shape[1]
    prior = range(len(b)) if u is None else [x for x in range(len(b)) if bits[x, u] == m]
    norm = 1.0 if u is None else sum(b[x] for x in prior)
    out = np.zeros((k, 2))
    for src in range(k):
        for i in (0, 1):
            succ = [y for y in range(len(b)) if bits[y, src] == i]
            out[src, i] = sum(b[x] / norm * kernel[x, y] for x in prior for y in succ)
    return out


def distortion(x, xhat, kind: DistortionKind = DistortionKind.ABSOLUTE):
    diff = np.abs(np.asarray(x) - np.asarray(xhat))
    if kind is DistortionKind.INDICATOR:
        return (diff != 0).astype(float)
    if kind is DistortionKind.ABSOLUTE:
        return diff.astype(float)
    if kind is DistortionKind.SQUARED:
        return (diff ** 2).astype(float)
    raise ValueError(f"unknown distortion kind {kind!r}")


def true_cost(x, xhat, a: int, gamma: float,
              kind: DistortionKind = DistortionKind.ABSOLUTE) -> float:
    x = np.asarray(x)
    xhat = np.asarray(xhat)
    if x.shape != xhat.shape:
        raise ValueError("state and estimate lengths differ")
    return float(np.mean(distortion(x, xhat, kind))) + gamma * (a != 0)


def expected_distortion(b: np.ndarray, kind: DistortionKind = DistortionKind.ABSOLUTE) -> float:
    marg = marginalize(b)
    xhat = ml_estimate(marg)
    per_source = (marg[:, 0] * distortion(0, xhat, kind)
                  + marg[:, 1] * distortion(1, xhat, kind))
    return float(per_source.mean())


def expected_cost(b: np.ndarray, a: int, gamma: float,
                  kind: DistortionKind = DistortionKind.ABSOLUTE) -> float:
    return expected_distortion(b, kind) + gamma * (a != 0)
