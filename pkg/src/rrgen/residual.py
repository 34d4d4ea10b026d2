"""Lumped-VARX residual generation with identification-aware whitening.

Over a window of ``L`` samples ending at ``k`` the residual is::

    r = y_L - T_y y_L - H z_past - T_u u_L

and its covariance, inflated by the parameter-estimate uncertainty, is::

    Sigma = (Z_ol^T (Z_id Z_id^T)^-1 Z_ol + I_L) kron Sigma_e

where column ``j`` of ``Z_ol`` is the regressor of the ``j``-th window output.
The test statistic is ``r^T Sigma^-1 r`` compared against a chi-squared
threshold with ``(L - 1) * l`` degrees of freedom.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .chi2 import Chi2Params, threshold_for
from .numerics import NotPositiveDefiniteError, as_matrix, chol, kron, quad_form
from .sysid import GramInverse, IoRecord, MarkovEstimate, regressor_size


@dataclass(frozen=True)
class DetectorConfig:
    L: int
    p: int
    alpha: float
    m: int
    l: int  # noqa: E741
    sigma_e: np.ndarray = None

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("detection horizon L must be >= 2")
        if self.p < 1:
            raise ValueError("past horizon p must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        s = np.eye(self.l) if self.sigma_e is None else as_matrix(self.sigma_e)
        if s.shape != (self.l, self.l):
            raise ValueError(f"sigma_e must be {self.l}x{self.l}, got {s.shape}")
        chol(s)  # raises unless SPD
        object.__setattr__(self, "sigma_e", s)

    @property
    def dof(self) -> int:
        return (self.L - 1) * self.l

    @property
    def threshold(self) -> float:
        return threshold_for(Chi2Params(self.dof, self.alpha))


@dataclass(frozen=True)
class ToeplitzBlocks:
    H: np.ndarray
    Tu: np.ndarray
    Ty: np.ndarray


def assemble_blocks(xi: MarkovEstimate, cfg: DetectorConfig, L: int | None = None) -> ToeplitzBlocks:
    """Fill ``H``, ``T_u`` and ``T_y`` from the identified Markov parameters.

    Terms reaching further back than the past horizon are truncated, so
    window row ``i`` uses exactly the ``p`` most recent I/O pairs before its
    output plus the current input. ``L`` overrides ``cfg.L`` (e.g. ``L=1``).
    """
    if (xi.p, xi.m, xi.l) != (cfg.p, cfg.m, cfg.l):
        raise ValueError(
            f"Markov estimate (p={xi.p}, m={xi.m}, l={xi.l}) does not match "
            f"config (p={cfg.p}, m={cfg.m}, l={cfg.l})"
        )
    L = cfg.L if L is None else L
    p, m, l = xi.p, xi.m, xi.l  # noqa: E741
    w = m + l
    H = np.zeros((L * l, p * w))
    Tu = np.zeros((L * l, L * m))
    Ty = np.zeros((L * l, L * l))
    for i in range(L):
        rows = slice(i * l, (i + 1) * l)
        for c in range(i, p):
            tau = i + p - 1 - c
            H[rows, c * w:c * w + m] = xi.cb(tau)
            H[rows, c * w + m:(c + 1) * w] = xi.ck(tau)
        Tu[rows, i * m:(i + 1) * m] = xi.D
        for j in range(max(0, i - p), i):
            tau = i - j - 1
            Tu[rows, j * m:(j + 1) * m] = xi.cb(tau)
            Ty[rows, j * l:(j + 1) * l] = xi.ck(tau)
    return ToeplitzBlocks(H, Tu, Ty)


@dataclass
class ResidualState:
    """Sliding buffer of the last ``L + p`` samples plus the online regressors.

    ``Z_ol`` is updated incrementally: each push shifts its columns left by
    one and forms only the newest column.
    """

    cfg: DetectorConfig
    samples: deque = field(init=False)
    Z_ol: np.ndarray = field(init=False)
    _filled: int = field(init=False, default=0)

    def __post_init__(self):
        self.samples = deque(maxlen=self.cfg.L + self.cfg.p)
        self.Z_ol = np.zeros((regressor_size(self.cfg.p, self.cfg.m, self.cfg.l), self.cfg.L))

    @property
    def ready(self) -> bool:
        return len(self.samples) == self.samples.maxlen

    def push(self, u, y) -> "ResidualState":
        u = np.asarray(u, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if u.shape != (self.cfg.m,) or y.shape != (self.cfg.l,):
            raise ValueError(f"sample dims u{u.shape}, y{y.shape} do not match config")
        self.samples.append((u, y))
        p = self.cfg.p
        if len(self.samples) > p:
            recent = list(self.samples)[-(p + 1):]
            past = np.concatenate([np.concatenate(s) for s in recent[:p]])
            col = np.concatenate([past, u])
            self.Z_ol[:, :-1] = self.Z_ol[:, 1:]
            self.Z_ol[:, -1] = col
        return self

    def stacks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(z_past, u_L, y_L)`` column vectors for the current window."""
        if not self.ready:
            raise ValueError(
                f"window not full: {len(self.samples)} of {self.samples.maxlen} samples"
            )
        buf = list(self.samples)
        p = self.cfg.p
        z_past = np.concatenate([np.concatenate(s) for s in buf[:p]])
        u_l = np.concatenate([s[0] for s in buf[p:]])
        y_l = np.concatenate([s[1] for s in buf[p:]])
        return z_past[:, None], u_l[:, None], y_l[:, None]

    @classmethod
    def from_record(cls, cfg: DetectorConfig, rec: IoRecord, end: int) -> "ResidualState":
        """Batch construction of the state whose window ends at sample ``end``."""
        start = end - cfg.L - cfg.p + 1
        if start < 0:
            raise ValueError("not enough samples before end")
        state = cls(cfg)
        for k in range(start, end + 1):
            state.samples.append((rec.u[k].copy(), rec.y[k].copy()))
        z = rec.z()
        for j in range(cfg.L):
            t = start + cfg.p + j
            state.Z_ol[:, j] = np.concatenate([z[t - cfg.p:t].ravel(), rec.u[t]])
        return state


def push_sample(state: ResidualState, u, y) -> ResidualState:
    return state.push(u, y)


def compute_residual(state: ResidualState, blocks: ToeplitzBlocks) -> np.ndarray:
    z_past, u_l, y_l = state.stacks()
    return y_l - blocks.Ty @ y_l - blocks.H @ z_past - blocks.Tu @ u_l


def residual_covariance(state: ResidualState, gram: GramInverse, cfg: DetectorConfig) -> np.ndarray:
    z_ol = state.Z_ol
    core = z_ol.T @ gram.g @ z_ol
    core = 0.5 * (core + core.T) + np.eye(cfg.L)
    sigma = kron(core, cfg.sigma_e)
    sigma = 0.5 * (sigma + sigma.T)
    try:
        chol(sigma)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError("residual covariance is not positive definite") from exc
    return sigma


def test_statistic(r, sigma) -> float:
    """Squared norm of the whitened residual."""
    return quad_form(sigma, r)


test_statistic.__test__ = False  # not a pytest test


def detect(tau: float, gamma: float) -> bool:
    return tau > gamma


class RobustDetector:
    """Streaming detector: push samples, get ``(tau, alarm)`` once the window is full."""

    def __init__(self, xi: MarkovEstimate, gram: GramInverse, cfg: DetectorConfig):
        self.cfg = cfg
        self.xi = xi
        self.gram = gram
        self.blocks = assemble_blocks(xi, cfg)
        self.gamma = cfg.threshold
        self.state = ResidualState(cfg)

    def push(self, u, y) -> tuple[float, bool] | None:
        self.state.push(u, y)
        if not self.state.ready:
            return None
        r = compute_residual(self.state, self.blocks)
        sigma = residual_covariance(self.state, self.gram, self.cfg)
        tau = test_statistic(r, sigma)
        return tau, detect(tau, self.gamma)

    def run(self, rec: IoRecord) -> list[tuple[int, float, float, bool]]:
        """Trace rows ``(k, tau, gamma, alarm)`` for every full window."""
        need = self.cfg.L + self.cfg.p
        if rec.n < need:
            raise ValueError(f"record has {rec.n} samples; need at least L + p = {need}")
        rows = []
        for k in range(rec.n):
            out = self.push(rec.u[k], rec.y[k])
            if out is not None:
                rows.append((k, out[0], self.gamma, out[1]))
        return rows


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "tau", "gamma", "alarm"])
        for k, tau, gamma, alarm in rows:
            w.writerow([k, repr(float(tau)), repr(float(gamma)), int(alarm)])
