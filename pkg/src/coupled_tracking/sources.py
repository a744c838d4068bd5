"""Joint transition kernels for K binary sources and ground-truth sampling.

Joint configurations are indexed with source 1 as the most significant bit,
so for K=2 the order is 00, 01, 10, 11.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_SOURCES = 10
ROW_TOL = 1e-12


@dataclass(frozen=True)
class SourceParams:
    """Parameters of the partially coupled source model.

    ``p`` is the per-source self-transition probability (q = 1 - p is never
    stored), ``theta`` is the probability that a mixed configuration collapses
    to all-zeros under full coupling, and ``lam`` is the coupling factor.
    """

    k: int
    p: float
    theta: float = 0.5
    lam: float = 0.0

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if self.k > MAX_SOURCES:
            raise ValueError(f"k={self.k} exceeds the dense-kernel cap of {MAX_SOURCES}")
        for name in ("p", "theta", "lam"):
            _check_prob(name, getattr(self, name))

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def n_configs(self) -> int:
        return 2 ** self.k


@dataclass(frozen=True)
class JointConfig:
    bits: tuple[int, ...]

    @property
    def index(self) -> int:
        return bits_to_index(self.bits)

    @classmethod
    def from_index(cls, index: int, k: int) -> "JointConfig":
        return cls(tuple(int(b) for b in index_to_bits(index, k)))


def _check_prob(name, value):
    if not (0.0 <= value <= 1.0) or np.isnan(value):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


def index_to_bits(index: int, k: int) -> np.ndarray:
    if not 0 <= index < 2 ** k:
        raise ValueError(f"index {index} out of range for k={k}")
    return np.array([(index >> (k - 1 - i)) & 1 for i in range(k)], dtype=np.int64)


def bits_to_index(bits) -> int:
    out = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bits must be binary, got {bits!r}")
        out = (out << 1) | int(b)
    return out


def bit_table(k: int) -> np.ndarray:
    """(2^k, k) array whose row i holds the bits of configuration i."""
    idx = np.arange(2 ** k)[:, None]
    shifts = np.arange(k - 1, -1, -1)[None, :]
    return (idx >> shifts) & 1


def independent_kernel(params: SourceParams) -> np.ndarray:
    single = np.array([[params.p, params.q], [params.q, params.p]])
    kernel = np.ones((1, 1))
    for _ in range(params.k):
        kernel = np.kron(kernel, single)
    return kernel


def coupled_kernel(params: SourceParams) -> np.ndarray:
    n = params.n_configs
    zeros, ones = 0, n - 1
    kernel = np.zeros((n, n))
    kernel[:, zeros] = params.theta
    kernel[:, ones] = 1.0 - params.theta
    kernel[zeros, zeros], kernel[zeros, ones] = params.p, params.q
    kernel[ones, ones], kernel[ones, zeros] = params.p, params.q
    return kernel


def partial_kernel(params: SourceParams) -> np.ndarray:
    """Convex mix ``lam * coupled + (1 - lam) * independent``."""
    return params.lam * coupled_kernel(params) + (1.0 - params.lam) * independent_kernel(params)


def check_kernel(kernel: np.ndarray, tol: float = ROW_TOL) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"kernel must be square, got shape {kernel.shape}")
    n = kernel.shape[0]
    if n < 2 or n & (n - 1):
        raise ValueError(f"kernel size must be a power of two >= 2, got {n}")
    if np.any(kernel < 0) or np.any(kernel > 1):
        raise ValueError("kernel entries must lie in [0, 1]")
    err = np.max(np.abs(kernel.sum(axis=1) - 1.0))
    if err > tol:
        raise ValueError(f"kernel rows do not sum to one (max error {err:.3g})")
    return kernel


def sample_next(x: int, kernel: np.ndarray, rng: np.random.Generator) -> int:
    """Draw the successor configuration index of ``x``."""
    cdf = np.cumsum(kernel[x])
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(j, kernel.shape[0] - 1)


def _single_closed_class(kernel: np.ndarray) -> bool:
    """True when some state is reachable from every state (one recurrent class)."""
    adj = kernel > 0
    n = adj.shape[0]
    reach = adj | np.eye(n, dtype=bool)
    # transitive closure by repeated squaring; n <= 1024
    for _ in range(int(np.ceil(np.log2(n))) + 1):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return bool(reach.all(axis=0).any())


def stationary_distribution(kernel: np.ndarray, tol: float = 1e-12,
                            max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution by power iteration on the lazy chain.

    The lazy chain (I + P) / 2 has the same stationary distribution and is
    aperiodic, so the iteration converges for periodic kernels too.
    """
    kernel = check_kernel(kernel)
    # transient states are fine; two closed classes are not
    if not _single_closed_class(kernel):
        raise ValueError("kernel is reducible with several closed classes; "
                         "stationary distribution is not unique")
    n = kernel.shape[0]
    lazy = 0.5 * (kernel + np.eye(n))
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ lazy
        nxt /= nxt.sum()
        if np.max(np.abs(nxt @ kernel - nxt)) < tol:
            return nxt
        pi = nxt
    raise RuntimeError("power iteration did not reach the residual tolerance")
