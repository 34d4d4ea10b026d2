"""SISO static-gain detector: ``y(k) = d u(k) + e(k) + f(k)``.

Identification runs on ``n_id`` fault-free samples at an input amplitude set
by the identification SNR; detection then runs at ``u_level``. The window
statistic is the sum of squared residuals over the window divided by their
sample variance, tested against a chi-squared threshold with ``L - 1``
degrees of freedom.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .chi2 import Chi2Params, threshold_for
from .numerics import InsufficientExcitationError, RngStream, gauss_draw
from .sysid import IoRecord, markov_error_variance_static


@dataclass(frozen=True)
class Fault:
    """Additive output fault of ``height`` on samples ``start <= k < end``."""

    start: int = 400
    end: int = 700
    height: float = 5.0


@dataclass(frozen=True)
class BaselineConfig:
    d: float = 2.0
    sigma_e: float = 1.0
    u_level: float = 2.0
    n_id: int = 100
    L: int = 20
    alpha: float = 0.005
    fault: Fault | None = field(default_factory=Fault)
    run_length: int = 2000
    seed: int = 0
    # identification SNR in dB; None identifies at u_level
    snr_db: float | None = None
    # fixed gain estimate; None identifies it from simulated data
    dhat: float | None = None
    stride: int = 1

    def __post_init__(self):
        if not self.sigma_e > 0:
            raise ValueError("sigma_e must be positive")
        if self.L < 2:
            raise ValueError("window length L must be >= 2")
        if self.n_id < 2:
            raise ValueError("n_id must be >= 2")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        f = self.fault
        if f is not None and not 0 <= f.start <= f.end <= self.run_length:
            raise ValueError("fault span must satisfy 0 <= start <= end <= run_length")

    @property
    def u_id(self) -> float:
        if self.snr_db is None:
            return self.u_level
        return u_for_snr(self.snr_db, self.sigma_e, self.n_id)

    @property
    def threshold(self) -> float:
        return threshold_for(Chi2Params(self.L - 1, self.alpha))

    def no_fault(self) -> "BaselineConfig":
        return replace(self, fault=None)


def fault_signal(cfg: BaselineConfig, n: int | None = None) -> np.ndarray:
    n = cfg.run_length if n is None else n
    f = np.zeros(n)
    if cfg.fault is not None:
        f[cfg.fault.start:min(cfg.fault.end, n)] = cfg.fault.height
    return f


def simulate(cfg: BaselineConfig, rng: RngStream | None, *, identification: bool = False) -> IoRecord:
    """Detection run (with the configured fault) or a fault-free identification run.

    ``rng=None`` gives the noise-free response.
    """
    if identification:
        u = np.full(cfg.n_id, cfg.u_id)
        f = np.zeros(cfg.n_id)
    else:
        u = np.full(cfg.run_length, cfg.u_level)
        f = fault_signal(cfg)
    e = np.zeros(u.size) if rng is None else gauss_draw(rng, u.size, cfg.sigma_e)
    return IoRecord(u, cfg.d * u + e + f)


def estimate_gain(rec: IoRecord) -> float:
    u = rec.u[:, 0]
    energy = float(u @ u)
    if energy == 0.0:
        raise InsufficientExcitationError("identification input has zero energy")
    return float(rec.y[:, 0] @ u) / energy


def snr_db(u_id, sigma_e: float, L: int) -> float:
    """Identification SNR in dB with the ``1/(L - 1)`` energy normaliser.

    ``L`` is the number of identification samples.
    """
    if L < 2:
        raise ValueError("need at least 2 samples")
    u = np.asarray(u_id, dtype=float).ravel()
    return 10.0 * math.log10(float(u @ u) / (L - 1) / sigma_e**2)


def u_for_snr(target_db: float, sigma_e: float, n_id: int) -> float:
    """Constant input amplitude whose ``n_id``-sample record has SNR ``target_db``."""
    return sigma_e * math.sqrt((n_id - 1) / n_id * 10.0 ** (target_db / 10.0))


def residual_variance(u_k: float, u_id, sigma_e: float) -> float:
    """Residual variance including the gain-estimate error contribution."""
    return u_k**2 * markov_error_variance_static(u_id, sigma_e) + sigma_e**2


def window_statistic(r_window) -> float:
    """``sum(r^2) / s^2`` with ``s^2`` the unbiased sample variance of the window."""
    r = np.asarray(r_window, dtype=float).ravel()
    if r.size < 2:
        raise ValueError("window needs at least 2 residuals")
    s2 = float(np.sum((r - r.mean()) ** 2)) / (r.size - 1)
    if s2 == 0.0:
        raise ZeroDivisionError("degenerate window: zero sample variance")
    return float(r @ r) / s2


def window_statistics(r, L: int, stride: int = 1) -> np.ndarray:
    """``window_statistic`` over all sliding windows of ``r`` (last axis).

    Windows with zero sample variance give ``inf``.
    """
    r = np.asarray(r, dtype=float)
    w = sliding_window_view(r, L, axis=-1)[..., ::stride, :]
    mean = w.mean(axis=-1, keepdims=True)
    s2 = np.sum((w - mean) ** 2, axis=-1) / (L - 1)
    sq = np.sum(w * w, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(s2 > 0, sq / np.where(s2 > 0, s2, 1.0), np.inf)
    return tau


@dataclass
class Trace:
    """Per-sample detector output; ``tau``/``alarm`` are NaN/False until the window fills."""

    k: np.ndarray
    y: np.ndarray
    r: np.ndarray
    tau: np.ndarray
    gamma: float
    alarm: np.ndarray
    dhat: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "y", "r", "tau", "gamma", "alarm"])
            for row in zip(self.k, self.y, self.r, self.tau, self.alarm):
                k, y, r, tau, alarm = row
                w.writerow([int(k), repr(float(y)), repr(float(r)),
                            "" if math.isnan(tau) else repr(float(tau)),
                            repr(float(self.gamma)), int(alarm)])


def identify_gain(cfg: BaselineConfig, rng: RngStream) -> float:
    if cfg.dhat is not None:
        return cfg.dhat
    return estimate_gain(simulate(cfg, rng, identification=True))


def run_trace(cfg: BaselineConfig, rng: RngStream | None = None) -> Trace:
    """Identify (unless ``cfg.dhat`` is set), then run the windowed detector."""
    rng = RngStream(cfg.seed) if rng is None else rng
    dhat = identify_gain(cfg, rng.child(0))
    rec = simulate(cfg, rng.child(1))
    y = rec.y[:, 0]
    r = y - dhat * rec.u[:, 0]
    n = r.size
    tau = np.full(n, np.nan)
    if n >= cfg.L:
        tau[cfg.L - 1:] = window_statistics(r, cfg.L)
    gamma = cfg.threshold
    alarm = np.zeros(n, dtype=bool)
    valid = ~np.isnan(tau)
    alarm[valid] = tau[valid] > gamma
    return Trace(np.arange(n), y, r, tau, gamma, alarm, dhat)


@dataclass
class SweepCell:
    L: int
    snr_db: float
    trials: int
    windows: int
    alarms: int

    @property
    def far(self) -> float:
        return self.alarms / self.windows


@dataclass
class SweepResult:
    cells: list[SweepCell]

    def far(self, L: int, snr: float) -> float:
        for c in self.cells:
            if c.L == L and c.snr_db == snr:
                return c.far
        raise KeyError((L, snr))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["L", "snr_db", "trials", "windows", "alarms", "far"])
            for c in self.cells:
                w.writerow([c.L, repr(float(c.snr_db)), c.trials, c.windows, c.alarms, repr(c.far)])


def far_cell(cfg: BaselineConfig, trials: int, cell: int = 0, gamma: float | None = None) -> SweepCell:
    """No-fault alarm count for one (L, SNR) setting over independent trials.

    Every trial re-identifies the gain from its own stream
    ``(seed, cell, trial)`` and then slides the window over a fresh run.
    """
    cfg = cfg.no_fault()
    gamma = cfg.threshold if gamma is None else gamma
    root = RngStream(cfg.seed)
    alarms = windows = 0
    for t in range(trials):
        rng = root.child(cell, t)
        dhat = identify_gain(cfg, rng.child(0))
        rec = simulate(cfg, rng.child(1))
        r = rec.y[:, 0] - dhat * rec.u[:, 0]
        tau = window_statistics(r, cfg.L, cfg.stride)
        alarms += int(np.count_nonzero(tau > gamma))
        windows += tau.size
    return SweepCell(cfg.L, cfg.snr_db if cfg.snr_db is not None else snr_db(
        np.full(cfg.n_id, cfg.u_id), cfg.sigma_e, cfg.n_id), trials, windows, alarms)


def far_sweep(L_list, snr_list, trials: int, alpha: float = 0.005,
              base: BaselineConfig | None = None) -> SweepResult:
    """No-fault false-alarm rate on an (L, SNR) grid."""
    base = BaselineConfig() if base is None else base
    cells = []
    idx = 0
    for L in L_list:
        for snr in snr_list:
            cfg = replace(base, L=int(L), snr_db=float(snr), alpha=alpha, fault=None)
            cells.append(far_cell(cfg, trials, cell=idx))
            idx += 1
    return SweepResult(cells)


@dataclass
class SnrRow:
    snr_db: float
    mean_abs_err: float
    std_err: float


def snr_error_table(snr_list, trials: int, base: BaselineConfig | None = None) -> list[SnrRow]:
    """Monte-Carlo mean |d - dhat| per identification SNR."""
    if trials < 2:
        raise ValueError("need at least 2 trials")
    base = BaselineConfig() if base is None else base
    root = RngStream(base.seed)
    rows = []
    for i, snr in enumerate(snr_list):
        cfg = replace(base, snr_db=float(snr), dhat=None)
        errs = np.empty(trials)
        for t in range(trials):
            errs[t] = abs(cfg.d - identify_gain(cfg, root.child(1000 + i, t)))
        rows.append(SnrRow(float(snr), float(errs.mean()), float(errs.std(ddof=1) / math.sqrt(trials))))
    return rows


def write_snr_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "mean_abs_err", "std_err"])
        for row in rows:
            w.writerow([repr(row.snr_db), repr(row.mean_abs_err), repr(row.std_err)])
