"""Predictor-based identification of VARX Markov parameters.

Regressor layout (one column per identified output ``y(t)``)::

    [u(t-p); y(t-p); u(t-p+1); y(t-p+1); ...; u(t-1); y(t-1); u(t)]

so the parameter row block reads ``[C Phi^(p-1) B~, C Phi^(p-1) K, ..., C B~, C K | D]``.
Every downstream slice of ``xi_hat`` assumes this ordering.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import (
    InsufficientExcitationError,
    RngStream,
    as_matrix,
    chol,
    gauss_draw,
    lstsq,
)


class RecordError(ValueError):
    """Malformed or too-short input/output record."""


@dataclass(frozen=True)
class IoRecord:
    """Input/output samples: ``u`` is ``(N, m)``, ``y`` is ``(N, l)``."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if u.ndim != 2 or y.ndim != 2 or u.shape[0] != y.shape[0]:
            raise RecordError(f"u {u.shape} and y {y.shape} must have the same length")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.y.shape[1]

    def z(self) -> np.ndarray:
        """Lumped samples ``z(k) = [u(k); y(k)]`` as an ``(N, m + l)`` array."""
        return np.hstack([self.u, self.y])

    def slice(self, start: int, stop: int | None = None) -> "IoRecord":
        return IoRecord(self.u[start:stop], self.y[start:stop])

    def to_csv(self, path) -> None:
        header = [f"u_{i + 1}" for i in range(self.m)] + [f"y_{i + 1}" for i in range(self.l)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in np.hstack([self.u, self.y]):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "IoRecord":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise RecordError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        u_cols = [i for i, h in enumerate(header) if h.startswith("u_")]
        y_cols = [i for i, h in enumerate(header) if h.startswith("y_")]
        if not u_cols or not y_cols or len(u_cols) + len(y_cols) != len(header):
            raise RecordError(f"{path}: header must be u_1..u_m, y_1..y_l, got {header}")
        u_cols.sort(key=lambda i: int(header[i][2:]))
        y_cols.sort(key=lambda i: int(header[i][2:]))
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise RecordError(f"{path}: non-numeric entry ({exc})") from exc
        if data.size == 0 or data.shape[1] != len(header):
            raise RecordError(f"{path}: no data rows or ragged rows")
        if not np.isfinite(data).all():
            raise RecordError(f"{path}: non-finite entries")
        return cls(data[:, u_cols], data[:, y_cols])


def regressor_size(p: int, m: int, l: int) -> int:  # noqa: E741
    return p * (m + l) + m


def regressor(rec: IoRecord, t: int, p: int) -> np.ndarray:
    """The regressor column that predicts ``y(t)``."""
    z = rec.z()
    return np.concatenate([z[t - p:t].ravel(), rec.u[t]])


def build_data_matrices(rec: IoRecord, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Identification matrices ``(Y_id, Z_id)`` for past horizon ``p``.

    Column ``j`` corresponds to output ``y(p + j)``; the first ``p`` samples
    only ever appear as past data.
    """
    if p < 1:
        raise ValueError("past horizon p must be >= 1")
    n_cols = rec.n - p
    if n_cols < 1:
        raise RecordError(
            f"record of {rec.n} samples too short for p={p}: need at least {p + 1}"
        )
    z = rec.z()
    blocks = [z[j:j + n_cols].T for j in range(p)]
    blocks.append(rec.u[p:].T)
    z_id = np.vstack(blocks)
    y_id = rec.y[p:].T.copy()
    return y_id, z_id


@dataclass(frozen=True)
class MarkovEstimate:
    xi_hat: np.ndarray
    p: int
    m: int
    l: int  # noqa: E741

    def __post_init__(self):
        xi = as_matrix(self.xi_hat)
        if xi.shape != (self.l, regressor_size(self.p, self.m, self.l)):
            raise ValueError(
                f"xi_hat shape {xi.shape} inconsistent with p={self.p}, m={self.m}, l={self.l}"
            )
        object.__setattr__(self, "xi_hat", xi)

    @property
    def D(self) -> np.ndarray:
        return self.xi_hat[:, self.p * (self.m + self.l):]

    def _block(self, j: int) -> np.ndarray:
        if not 0 <= j < self.p:
            raise IndexError(f"Markov index {j} outside 0..{self.p - 1}")
        w = self.m + self.l
        start = (self.p - 1 - j) * w
        return self.xi_hat[:, start:start + w]

    def cb(self, j: int) -> np.ndarray:
        """``C Phi^j B~``."""
        return self._block(j)[:, :self.m]

    def ck(self, j: int) -> np.ndarray:
        """``C Phi^j K``."""
        return self._block(j)[:, self.m:]

    @classmethod
    def from_blocks(cls, D, cb: list, ck: list) -> "MarkovEstimate":
        """Assemble from ``D`` and the sequences ``cb[j] = C Phi^j B~``, ``ck[j] = C Phi^j K``."""
        D = as_matrix(D)
        l, m = D.shape  # noqa: E741
        p = len(cb)
        if len(ck) != p or p < 1:
            raise ValueError("cb and ck must have the same positive length")
        past = [np.hstack([as_matrix(cb[j]).reshape(l, m), as_matrix(ck[j]).reshape(l, l)])
                for j in reversed(range(p))]
        return cls(np.hstack(past + [D]), p, m, l)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "m": self.m,
            "l": self.l,
            "xi_hat": self.xi_hat.tolist(),
            "D": self.D.tolist(),
            "CPhiB": [self.cb(j).tolist() for j in range(self.p)],
            "CPhiK": [self.ck(j).tolist() for j in range(self.p)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarkovEstimate":
        return cls(np.array(d["xi_hat"], dtype=float), int(d["p"]), int(d["m"]), int(d["l"]))


def estimate_markov(y_id, z_id, p: int, m: int) -> MarkovEstimate:
    """Least-squares Markov parameters ``Y_id Z_id^+``."""
    y_id = as_matrix(y_id)
    xi = lstsq(y_id, z_id)
    return MarkovEstimate(xi, p, m, y_id.shape[0])


def identify(rec: IoRecord, p: int) -> tuple[MarkovEstimate, "GramInverse"]:
    y_id, z_id = build_data_matrices(rec, p)
    return estimate_markov(y_id, z_id, p, rec.m), gram_inverse(z_id)


@dataclass(frozen=True)
class GramInverse:
    g: np.ndarray

    def to_dict(self) -> dict:
        return {"size": int(self.g.shape[0]), "g": self.g.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GramInverse":
        return cls(np.array(d["g"], dtype=float))


def gram_inverse(z_id) -> GramInverse:
    """``(Z_id Z_id^T)^-1``, symmetrised."""
    z_id = as_matrix(z_id)
    if z_id.shape[0] > z_id.shape[1]:
        raise InsufficientExcitationError("regressor cannot have full row rank")
    gram = z_id @ z_id.T
    g_chol = chol(gram)
    n = gram.shape[0]
    inv_chol = np.linalg.solve(g_chol, np.eye(n))
    g = inv_chol.T @ inv_chol
    return GramInverse(0.5 * (g + g.T))


def innovation_covariance(rec: IoRecord, est: MarkovEstimate) -> np.ndarray:
    """Sample covariance of the one-step prediction errors on ``rec``.

    Convenience estimate of the innovation covariance when it is not known.
    """
    y_id, z_id = build_data_matrices(rec, est.p)
    e = y_id - est.xi_hat @ z_id
    dof = max(e.shape[1] - z_id.shape[0], 1)
    return (e @ e.T) / dof


def markov_error_variance_static(u_id, sigma_e: float) -> float:
    """Variance of the static-gain estimate error, ``sigma_e^2 / (U U^T)``."""
    u = np.asarray(u_id, dtype=float).ravel()
    energy = float(u @ u)
    if energy == 0.0:
        raise InsufficientExcitationError("identification input has zero energy")
    return sigma_e**2 / energy


@dataclass(frozen=True)
class InnovationModel:
    """Innovation-form plant used to generate data.

    ``x(k+1) = A x + B u + K e``, ``y = C x + D u + e`` with ``e ~ N(0, sigma_e)``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K: np.ndarray
    sigma_e: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D", "K", "sigma_e"):
            object.__setattr__(self, name, as_matrix(getattr(self, name)))

    @classmethod
    def from_predictor(cls, phi, b_tilde, k, c, d, sigma_e) -> "InnovationModel":
        """Build from predictor matrices ``Phi = A - K C`` and ``B~ = B - K D``."""
        phi, b_tilde, k, c, d = map(as_matrix, (phi, b_tilde, k, c, d))
        return cls(phi + k @ c, b_tilde + k @ d, c, d, k, sigma_e)

    @property
    def phi(self) -> np.ndarray:
        return self.A - self.K @ self.C

    @property
    def b_tilde(self) -> np.ndarray:
        return self.B - self.K @ self.D

    def markov(self, p: int) -> MarkovEstimate:
        """Exact Markov parameters truncated at past horizon ``p``."""
        cb, ck = [], []
        phi_j = np.eye(self.A.shape[0])
        for _ in range(p):
            cb.append(self.C @ phi_j @ self.b_tilde)
            ck.append(self.C @ phi_j @ self.K)
            phi_j = phi_j @ self.phi
        return MarkovEstimate.from_blocks(self.D, cb, ck)

    def simulate(self, u, rng: RngStream | None, x0=None, faults=None) -> tuple[IoRecord, np.ndarray]:
        """Simulate outputs for inputs ``u``.

        Returns the record and the innovation sequence ``e`` (``(N, l)``).
        ``faults`` (``(N, l)``) is added to the measured output only.
        ``rng=None`` gives the noise-free response.
        """
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        n = u.shape[0]
        n_x = self.A.shape[0]
        l = self.C.shape[0]  # noqa: E741
        if rng is None:
            e = np.zeros((n, l))
        else:
            w = gauss_draw(rng, n * l).reshape(n, l)
            e = w @ chol(self.sigma_e).T
        x = np.zeros(n_x) if x0 is None else np.asarray(x0, dtype=float).ravel()
        y = np.empty((n, l))
        for k in range(n):
            y[k] = self.C @ x + self.D @ u[k] + e[k]
            x = self.A @ x + self.B @ u[k] + self.K @ e[k]
        if faults is not None:
            y = y + np.asarray(faults, dtype=float).reshape(n, l)
        return IoRecord(u, y), e
