"""Frequency-response estimation from chirp records, error metrics and reports."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InsufficientDataError

log = logging.getLogger(__name__)

BODE_HEADER = ("frequency_hz", "magnitude_db", "phase_deg")
N_BINS = 24
MIN_CYCLES = 2.0
WINDOW_CYCLES = 3.0
MIN_WINDOW_S = 0.2


@dataclass(frozen=True)
class BodeCurve:
    frequency: np.ndarray
    magnitude_db: np.ndarray
    phase_deg: np.ndarray
    dropped: tuple[tuple[float, str], ...] = ()

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float)
        if not (f.shape == np.shape(self.magnitude_db) == np.shape(self.phase_deg)):
            raise ContractError("Bode sequences must have equal length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ContractError("Bode frequencies must be strictly increasing")

    def rows(self):
        return zip(self.frequency, self.magnitude_db, self.phase_deg)

    def peak(self) -> tuple[float, float]:
        """(frequency Hz, magnitude dB) of the largest magnitude bin."""
        k = int(np.argmax(self.magnitude_db))
        return float(self.frequency[k]), float(self.magnitude_db[k])

    def low_frequency_magnitude(self) -> float:
        return float(self.magnitude_db[0])

    def magnitude_at(self, f: float) -> float:
        return float(np.interp(f, self.frequency, self.magnitude_db))


@dataclass(frozen=True)
class _Sweep:
    """Linear sweep f(t) = f0 + (f1 - f0) t / T used to place and phase the fit windows."""

    f0: float
    f1: float
    span: float

    def phase(self, t):
        return 2 * np.pi * (self.f0 * t + (self.f1 - self.f0) * t * t / (2 * self.span))

    def frequency(self, t):
        return self.f0 + (self.f1 - self.f0) * t / self.span

    def time_at(self, f):
        return (f - self.f0) * self.span / (self.f1 - self.f0)


def _fit_sinusoid(t, y, phase) -> complex:
    """Least-squares ``y ~ a + b t + A cos(phase + theta)``; returns ``A e^{i theta}``."""
    tc = t - t.mean()
    X = np.column_stack([np.ones_like(t), tc, np.cos(phase), np.sin(phase)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return complex(coef[2], -coef[3])


def estimate_bode(command, response, dt: float, band: tuple[float, float] = (2.0, 20.0),
                  n_bins: int = N_BINS, chirp=None) -> BodeCurve:
    """Empirical frequency response of ``response`` relative to ``command``.

    The record is assumed to be a linear chirp; pass the ``ChirpSpec`` that
    generated it as ``chirp``, otherwise the sweep is taken to run from
    ``band[0]`` at the first sample to ``band[1]`` at the last. Bins are
    log-spaced; each uses a window of ``max(3 cycles, 0.2 s)`` centred where
    the sweep passes the bin frequency (shifted inward at the record edges),
    and the reported frequency is the sweep frequency at the window centre.
    """
    u = np.asarray(command, dtype=float)
    y = np.asarray(response, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise ContractError("command and response must be 1-D series of equal length")
    if dt <= 0:
        raise ContractError("dt must be positive")
    f_lo, f_hi = band
    if not 0 < f_lo < f_hi or f_hi >= 0.5 / dt:
        raise ContractError(f"band {band} must be increasing and below Nyquist {0.5 / dt} Hz")
    t = np.arange(u.size) * dt
    span = t[-1]
    if chirp is not None:
        sweep = _Sweep(chirp.f_low, chirp.f_high, chirp.duration)
    else:
        sweep = _Sweep(f_lo, f_hi, span)
    phase = sweep.phase(t)

    freqs, mags, phases, dropped = [], [], [], []
    for fb in np.geomspace(f_lo, f_hi, n_bins):
        width = max(WINDOW_CYCLES / fb, MIN_WINDOW_S)
        tc = sweep.time_at(fb)
        start = min(max(tc - width / 2, 0.0), max(span - width, 0.0))
        stop = min(start + width, span)
        i0, i1 = int(np.ceil(start / dt - 1e-9)), int(np.floor(stop / dt + 1e-9)) + 1
        cycles = (sweep.phase(stop) - sweep.phase(start)) / (2 * np.pi)
        if cycles < MIN_CYCLES or i1 - i0 < 8:
            exc = InsufficientDataError(f"window at {fb:.3f} Hz spans {cycles:.2f} cycles")
            log.info("dropping bin: %s", exc)
            dropped.append((float(fb), str(exc)))
            continue
        fc = float(sweep.frequency(0.5 * (start + stop)))
        if freqs and fc <= freqs[-1] + 1e-9:
            dropped.append((float(fb), "window coincides with the previous bin at the record edge"))
            continue
        sl = slice(i0, i1)
        cu = _fit_sinusoid(t[sl], u[sl], phase[sl])
        cy = _fit_sinusoid(t[sl], y[sl], phase[sl])
        if abs(cu) == 0:
            dropped.append((float(fb), "command has no component at this frequency"))
            continue
        ratio = cy / cu
        freqs.append(fc)
        mags.append(20 * np.log10(abs(ratio)) if abs(ratio) > 0 else -np.inf)
        phases.append(np.angle(ratio))
    phase_deg = np.degrees(np.unwrap(np.array(phases))) if phases else np.array([])
    return BodeCurve(np.array(freqs), np.array(mags), phase_deg, tuple(dropped))


def second_order_response(f, fn: float, zeta: float) -> np.ndarray:
    """Closed-form ``wn^2 / (s^2 + 2 zeta wn s + wn^2)`` at ``s = 2 pi i f``."""
    s = 2j * np.pi * np.asarray(f, dtype=float)
    wn = 2 * np.pi * fn
    return wn * wn / (s * s + 2 * zeta * wn * s + wn * wn)


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ContractError(f"series must have equal non-zero length, got {a.shape} and {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass
class ExperimentReport:
    scenario: str
    config_hash: str
    metrics: list[tuple[str, float, str]] = field(default_factory=list)  # (name, value, trace)
    artifacts: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add(self, name: str, value: float, trace: str) -> None:
        self.metrics.append((name, float(value), trace))

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario}", f"config_hash: {self.config_hash}", "metrics:"]
        width = max((len(n) for n, _, _ in self.metrics), default=0)
        for name, value, trace in self.metrics:
            lines.append(f"  {name:<{width}}  {value:12.6g}  [{trace}]")
        if self.notes:
            lines.append("notes:")
            lines.extend(f"  {n}" for n in self.notes)
        if self.artifacts:
            lines.append("artifacts:")
            lines.extend(f"  {a}" for a in sorted(self.artifacts))
        return "\n".join(lines) + "\n"
