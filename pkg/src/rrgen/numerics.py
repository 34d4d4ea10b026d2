"""Dense linear algebra and seeded Gaussian generation.

Matrices are plain 2-D ``numpy`` float64 arrays. The functions here add the
shape and conditioning checks the rest of the package relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Reject identification problems whose Gram matrix is worse conditioned than this.
MAX_GRAM_CONDITION = 1e12
# Cholesky pivots below this fraction of the largest diagonal entry are rejected.
SPD_PIVOT_RTOL = 1e-12


class DimensionError(ValueError):
    pass


class InsufficientExcitationError(np.linalg.LinAlgError):
    """Regressor matrix is (numerically) rank deficient."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.size == 0:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    return m


def mat_mul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def lstsq(y, z) -> np.ndarray:
    """Return ``xi`` minimising ``||y - xi @ z||_F`` for full-row-rank ``z``.

    Solved through a QR factorisation of ``z.T`` so the Gram matrix is never
    formed explicitly; its condition number is still what gets checked.
    """
    y, z = as_matrix(y), as_matrix(z)
    if y.shape[1] != z.shape[1]:
        raise DimensionError(f"y has {y.shape[1]} columns but z has {z.shape[1]}")
    n_rows, n_cols = z.shape
    if n_rows > n_cols:
        raise InsufficientExcitationError(
            f"regressor has {n_rows} rows but only {n_cols} samples; "
            "cannot have full row rank"
        )
    q, r = np.linalg.qr(z.T)
    cond = gram_condition(r)
    if not cond <= MAX_GRAM_CONDITION:
        raise InsufficientExcitationError(
            f"insufficient excitation: Gram matrix condition estimate {cond:.3g} "
            f"exceeds {MAX_GRAM_CONDITION:.0e}"
        )
    # xi = y Q R^{-T}  <=>  R xi^T = Q^T y^T
    return np.linalg.solve(r, q.T @ y.T).T


def gram_condition(r: np.ndarray) -> float:
    """Condition number of ``r.T @ r`` from the triangular factor ``r``."""
    d = np.abs(np.diag(r))
    if d.min() == 0.0:
        return np.inf
    with np.errstate(all="ignore"):
        c = np.linalg.cond(r)
    return float(c) ** 2


def chol(s) -> np.ndarray:
    """Lower-triangular Cholesky factor ``g`` with ``g @ g.T == s``."""
    s = as_matrix(s)
    n = s.shape[0]
    if s.shape != (n, n):
        raise DimensionError(f"Cholesky needs a square matrix, got {s.shape}")
    scale = float(np.max(np.abs(np.diag(s))))
    if not np.isfinite(s).all() or scale <= 0.0:
        raise NotPositiveDefiniteError("matrix is not positive definite")
    try:
        g = np.linalg.cholesky(0.5 * (s + s.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    if np.min(np.diag(g)) ** 2 <= SPD_PIVOT_RTOL * scale:
        raise NotPositiveDefiniteError(
            "matrix is numerically singular (Cholesky pivot below threshold)"
        )
    return g


def solve_lower(g: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution for lower-triangular ``g``."""
    n = g.shape[0]
    b = np.array(b, dtype=float).reshape(n, -1)
    x = np.empty_like(b)
    for i in range(n):
        x[i] = (b[i] - g[i, :i] @ x[:i]) / g[i, i]
    return x


def quad_form(s, r) -> float:
    """``r.T @ inv(s) @ r`` via a Cholesky solve (squared whitened norm)."""
    s, r = as_matrix(s), as_matrix(r)
    if r.shape != (s.shape[0], 1):
        raise DimensionError(f"vector of shape {r.shape} does not match {s.shape}")
    w = solve_lower(chol(s), r)
    return float(np.sum(w * w))


@dataclass
class RngStream:
    """Seeded Gaussian stream.

    ``position`` counts the normal variates drawn so far; constructing a
    stream with a given ``(seed, position)`` resumes exactly where a stream
    with that history left off. ``key`` derives independent substreams,
    e.g. one per (sweep cell, trial).
    """

    seed: int
    position: int = 0
    key: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(self.key))
        self._gen = np.random.Generator(np.random.PCG64(ss))
        skip = self.position
        while skip > 0:
            n = min(skip, 1 << 20)
            self._gen.standard_normal(n)
            skip -= n

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, 0, tuple(self.key) + tuple(key))

    def standard_normal(self, n: int) -> np.ndarray:
        out = self._gen.standard_normal(n)
        self.position += n
        return out


def gauss_draw(rng: RngStream, n: int, sigma: float = 1.0) -> np.ndarray:
    """``n`` i.i.d. N(0, sigma^2) draws as an ``(n,)`` array."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return sigma * rng.standard_normal(n)
