"""Nonnegative matrix factorization ``X ≈ W H`` under the Frobenius loss.

Two solvers are provided: Lee–Seung multiplicative updates (the default, with
a monotone objective) and hierarchical alternating least squares (HALS).
"""

from __future__ import annotations

import contextlib
import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    CacheFormatError,
    ConfigError,
    DataError,
    DegenerateInput,
    DimensionMismatch,
    IoFailure,
    RankOutOfRange,
)
from .patchgrid import atomic_write

_SEED_MOD = 2**64
# residual is evaluated in row blocks of about this many entries
_CHUNK_ENTRIES = 1 << 22


class Algorithm(str, enum.Enum):
    MU = "mu"
    HALS = "hals"


@dataclass(frozen=True)
class FactorizationOptions:
    k: int
    max_iters: int = 100
    rel_tol: float = 1e-4
    replicates: int = 3
    seed: int = 0
    algorithm: Algorithm = Algorithm.MU
    epsilon: float = 1e-9

    def __post_init__(self):
        try:
            object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        except ValueError:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected 'mu' or 'hals'") from None
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.rel_tol > 0:
            raise ConfigError(f"rel_tol must be > 0, got {self.rel_tol}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 <= self.seed < _SEED_MOD:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    def check_rank(self, rows: int, cols: int) -> None:
        if not 0 < self.k < min(rows, cols):
            raise RankOutOfRange(f"k={self.k} outside (0, min({rows}, {cols}))")


@dataclass(frozen=True, eq=False)
class Factorization:
    W: np.ndarray
    H: np.ndarray
    objective_trace: tuple[float, ...]
    final_objective: float
    iterations_run: int
    seed_used: int
    algorithm: Algorithm = Algorithm.MU

    @property
    def k(self) -> int:
        return self.W.shape[1]

    def to_bytes(self, matrix_sha256: str = "") -> bytes:
        return _encode_factorization(self, matrix_sha256)


def objective(X: np.ndarray, W: np.ndarray, H: np.ndarray) -> float:
    """``½‖X − W H‖²_F``."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if X.ndim != 2 or W.ndim != 2 or H.ndim != 2:
        raise DimensionMismatch("X, W and H must be 2-d")
    if W.shape[0] != X.shape[0] or H.shape[1] != X.shape[1] or W.shape[1] != H.shape[0]:
        raise DimensionMismatch(
            f"cannot compare X{X.shape} with W{W.shape} @ H{H.shape}"
        )
    rows, cols = X.shape
    step = max(1, _CHUNK_ENTRIES // max(cols, 1))
    total = 0.0
    for r0 in range(0, rows, step):
        R = X[r0 : r0 + step] - W[r0 : r0 + step] @ H
        total += float(np.einsum("ij,ij->", R, R))
    return 0.5 * total


def init_factors(rows: int, cols: int, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform (0, 1] starting factors from a PCG64 stream keyed by ``seed``.

    ``W`` is drawn first (row-major), then ``H``; equal arguments give
    bit-identical output on every platform numpy supports.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    W = 1.0 - rng.random((rows, k))
    H = 1.0 - rng.random((k, cols))
    return W, H


def mu_step(X, W, H, epsilon=1e-9):
    """One multiplicative update: ``H`` first, then ``W`` against the new ``H``."""
    H = H * (W.T @ X) / ((W.T @ W) @ H + epsilon)
    W = W * (X @ H.T) / (W @ (H @ H.T) + epsilon)
    return W, H


def hals_step(X, W, H, epsilon=1e-9):
    """One HALS sweep: each row of ``H``, then each column of ``W``, projected onto ``≥ 0``."""
    W = np.array(W, dtype=np.float64)
    H = np.array(H, dtype=np.float64)
    k = W.shape[1]
    WtX = W.T @ X
    WtW = W.T @ W
    for j in range(k):
        H[j] = np.maximum(H[j] + (WtX[j] - WtW[j] @ H) / max(WtW[j, j], epsilon), 0.0)
    XHt = X @ H.T
    HHt = H @ H.T
    for j in range(k):
        W[:, j] = np.maximum(W[:, j] + (XHt[:, j] - W @ HHt[:, j]) / max(HHt[j, j], epsilon), 0.0)
    return W, H


_STEPS = {Algorithm.MU: mu_step, Algorithm.HALS: hals_step}


def check_data_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("matrix contains non-finite values")
    if (X < 0).any():
        raise DataError("matrix has negative entries")
    return X


def _run(X, opts: FactorizationOptions, seed: int) -> Factorization:
    step = _STEPS[opts.algorithm]
    W, H = init_factors(X.shape[0], X.shape[1], opts.k, seed)
    prev = objective(X, W, H)
    trace = []
    for _ in range(opts.max_iters):
        W, H = step(X, W, H, opts.epsilon)
        assert (W >= 0).all() and (H >= 0).all()
        cur = objective(X, W, H)
        trace.append(cur)
        if abs(cur - prev) / (1.0 + prev) < opts.rel_tol:
            break
        prev = cur
    return Factorization(W, H, tuple(trace), trace[-1], len(trace), seed, opts.algorithm)


@contextlib.contextmanager
def limit_threads(threads: int | None):
    """Cap BLAS worker threads; ``None`` leaves the current setting."""
    if threads is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=int(threads), user_api="blas"):
        yield


def factorize(X, opts: FactorizationOptions, threads: int | None = None) -> Factorization:
    """Best of ``opts.replicates`` seeded runs (seeds ``seed, seed+1, …``).

    The run with the smallest final objective wins; ties go to the earlier seed.
    """
    X = check_data_matrix(X)
    opts.check_rank(*X.shape)
    if not np.any(X):
        raise DegenerateInput("matrix has zero Frobenius norm")
    best = None
    with limit_threads(threads):
        for r in range(opts.replicates):
            result = _run(X, opts, (opts.seed + r) % _SEED_MOD)
            if best is None or result.final_objective < best.final_objective:
                best = result
    return best


def solve_coefficients(X, W, max_iters=200, epsilon=1e-9, seed=0) -> np.ndarray:
    """Nonnegative ``H`` for fixed ``W`` via multiplicative updates on ``H`` alone."""
    X = check_data_matrix(X)
    W = np.asarray(W, dtype=np.float64)
    if W.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"W has {W.shape[0]} rows, X has {X.shape[0]}")
    _, H = init_factors(0, X.shape[1], W.shape[1], seed)
    WtX = W.T @ X
    WtW = W.T @ W
    for _ in range(max_iters):
        H = H * WtX / (WtW @ H + epsilon)
    return H


# --------------------------------------------------------------------------
# cache file
# --------------------------------------------------------------------------

FACTOR_MAGIC = b"GZNMFFAC"
FACTOR_VERSION = 1
_FACTOR_HEADER = struct.Struct("<8sIQQIQ4sIdQ64s")


def _encode_factorization(F: Factorization, matrix_sha256: str) -> bytes:
    rows, k = F.W.shape
    cols = F.H.shape[1]
    header = _FACTOR_HEADER.pack(
        FACTOR_MAGIC, FACTOR_VERSION, rows, cols, k, F.seed_used,
        F.algorithm.value.encode("ascii").ljust(4, b"\0"), F.iterations_run,
        F.final_objective, len(F.objective_trace), matrix_sha256.encode("ascii").ljust(64, b"\0"),
    )
    return b"".join([
        header,
        np.asarray(F.objective_trace, dtype="<f8").tobytes(),
        np.asarray(F.W, dtype="<f8").tobytes(order="F"),
        np.asarray(F.H, dtype="<f8").tobytes(order="F"),
    ])


def save_factorization(path: str | Path, F: Factorization, matrix_sha256: str = "") -> None:
    atomic_write(path, _encode_factorization(F, matrix_sha256))


def load_factorization(path: str | Path) -> tuple[Factorization, str]:
    """Read a factorization cache; returns it with the digest of its source matrix."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(path, str(exc)) from exc
    if len(blob) < _FACTOR_HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    (magic, version, rows, cols, k, seed, algo, iters, final, n_trace, digest) = (
        _FACTOR_HEADER.unpack_from(blob)
    )
    if magic != FACTOR_MAGIC:
        raise CacheFormatError(f"{path}: not a factorization cache")
    if version != FACTOR_VERSION:
        raise CacheFormatError(f"{path}: cache version {version}, expected {FACTOR_VERSION}")
    offset = _FACTOR_HEADER.size
    expected = 8 * (n_trace + rows * k + k * cols)
    if len(blob) - offset != expected:
        raise CacheFormatError(f"{path}: payload size mismatch")
    trace = np.frombuffer(blob, "<f8", n_trace, offset)
    offset += 8 * n_trace
    W = np.frombuffer(blob, "<f8", rows * k, offset).reshape((rows, k), order="F")
    offset += 8 * rows * k
    H = np.frombuffer(blob, "<f8", k * cols, offset).reshape((k, cols), order="F")
    F = Factorization(
        W.astype(np.float64), H.astype(np.float64), tuple(float(t) for t in trace),
        final, iters, seed, Algorithm(algo.rstrip(b"\0").decode("ascii")),
    )
    return F, digest.rstrip(b"\0").decode("ascii")
