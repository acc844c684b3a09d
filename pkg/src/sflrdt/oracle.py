"""Finite-size brute-force estimate of the extremal norm ``E max_x +-||G x||``.

``x`` ranges over the corners ``{-1/sqrt(n), +1/sqrt(n)}^n``.  Fixing the
first sign halves the enumeration to ``2^(n-1)`` candidates.  Small ``n``
enumerates every candidate with one matrix product per batch of trials;
larger ``n`` splits the columns in two halves, builds each half's partial
sums by sign doubling (``O(m)`` per candidate) and gets every
``||a_i + b_j||^2`` from the cross products ``a_i . b_j``.

Random matrices come from numpy's PCG64 seeded through ``SeedSequence``;
trials are grouped in fixed blocks and block ``b`` draws from the child
stream ``SeedSequence(seed, spawn_key=(b,))``, so results do not depend on
the number of workers.  Normals use numpy's ziggurat transform.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CapError

MAX_N = 24
BLOCK_TRIALS = 1024
_FULL_ENUM_MAX_N = 10
_BATCH_BUDGET = 1 << 22  # floats per batched product


@dataclass(frozen=True)
class OracleConfig:
    n: int
    m: int
    s: int = 1
    trials: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.n > MAX_N:
            raise CapError(f"n = {self.n} exceeds the enumeration cap {MAX_N}")
        if self.m < 1 or self.trials < 1:
            raise ValueError("m and trials must be >= 1")
        if self.s not in (1, -1):
            raise ValueError("s must be +1 or -1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class OracleEstimate:
    mean: float
    std_error: float
    trials: int
    n: int
    m: int
    seed: int
    s: int = 1
    metadata: dict = field(default_factory=dict)


def _signs(n):
    """All sign vectors with first entry +1, shape (2^(n-1), n)."""
    k = np.arange(1 << (n - 1))
    bits = (k[:, None] >> np.arange(n - 1)) & 1
    return np.hstack([np.ones((len(k), 1)), 1.0 - 2.0 * bits])


def _half_sums(cols):
    """Partial sums of +-columns by sign doubling; shape (2^k, m)."""
    sums = np.zeros((1, cols.shape[0]))
    for g in cols.T:
        sums = np.concatenate([sums + g, sums - g])
    return sums


def _pick(values, s):
    return values.max() if s == 1 else values.min()


def extremal_norm(G, s=1):
    """max (s=+1) or min (s=-1) of ||G x|| over x in {+-1/sqrt(n)}^n."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise ValueError("G must be a matrix")
    m, n = G.shape
    if n > MAX_N:
        raise CapError(f"n = {n} exceeds the enumeration cap {MAX_N}")
    if s not in (1, -1):
        raise ValueError("s must be +1 or -1")
    if not np.all(np.isfinite(G)):
        raise ValueError("G must be finite")
    if n <= _FULL_ENUM_MAX_N:
        sq = np.sum((G @ _signs(n).T) ** 2, axis=0)
        return float(np.sqrt(_pick(sq, s) / n))
    n1 = n // 2
    a = _half_sums(G[:, 1:n1]) + G[:, 0]  # first sign fixed to +1
    b = _half_sums(G[:, n1:])
    na = np.sum(a * a, axis=1)
    nb = np.sum(b * b, axis=1)
    best = None
    rows = max(1, _BATCH_BUDGET // len(b))
    for i in range(0, len(a), rows):
        sq = na[i:i + rows, None] + nb[None, :] + 2.0 * (a[i:i + rows] @ b.T)
        v = _pick(sq, s)
        best = v if best is None else (max(best, v) if s == 1 else min(best, v))
    return float(np.sqrt(max(best, 0.0) / n))


def _block_values(cfg, block):
    start = block * BLOCK_TRIALS
    count = min(BLOCK_TRIALS, cfg.trials - start)
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(block,))
    rng = np.random.Generator(np.random.PCG64(ss))
    G = rng.standard_normal((count, cfg.m, cfg.n))
    scale = np.sqrt(cfg.n)
    if cfg.n <= _FULL_ENUM_MAX_N:
        signs = _signs(cfg.n).T
        out = np.empty(count)
        step = max(1, _BATCH_BUDGET // (cfg.m * signs.shape[1]))
        for i in range(0, count, step):
            sq = np.sum((G[i:i + step] @ signs) ** 2, axis=1)
            best = sq.max(axis=1) if cfg.s == 1 else sq.min(axis=1)
            out[i:i + step] = np.sqrt(best / cfg.n) / scale
        return out
    return np.array([extremal_norm(g, cfg.s) / scale for g in G])


def worker_count():
    """Workers allowed by SFLRDT_THREADS, else the machine's CPU count."""
    env = os.environ.get("SFLRDT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def estimate_ground_state(cfg: OracleConfig, workers=None):
    """Mean and standard error of extremal_norm(G)/sqrt(n) over seeded trials."""
    n_blocks = -(-cfg.trials // BLOCK_TRIALS)
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers == 1 or n_blocks == 1:
        parts = [_block_values(cfg, b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, n_blocks)) as pool:
            parts = list(pool.map(lambda b: _block_values(cfg, b), range(n_blocks)))
    values = np.concatenate(parts)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(cfg.trials)) if cfg.trials > 1 else float("nan")
    meta = {
        "bit_generator": "PCG64",
        "seeding": f"SeedSequence(seed, spawn_key=(block,)), {BLOCK_TRIALS} trials per block",
        "normal_transform": "numpy ziggurat (Generator.standard_normal)",
        "numpy_version": np.__version__,
    }
    return OracleEstimate(mean, se, cfg.trials, cfg.n, cfg.m, cfg.seed, cfg.s, meta)
