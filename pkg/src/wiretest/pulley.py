"""Wires, passive pulleys and per-pulley tension transmission efficiency.

Every efficiency stored in an :class:`EfficiencyTable` is a *per pulley*
value. A measurement taken through a chain of ``n`` identical pulleys is
reduced to a per-pulley value with :func:`per_pulley_efficiency`.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ContractError, DomainError, InconsistentMeasurementError, NotFoundError

STANDARD_PULLEY_DIAMETERS_MM = (12.0, 14.0, 16.0, 18.0, 20.0, 30.0, 40.0, 60.0)
STANDARD_TENSIONS_N = (200.0, 400.0)
CSV_HEADER = ("wire", "pulley_diameter_mm", "tension_n", "efficiency", "provenance")


@dataclass(frozen=True)
class WireSpec:
    """Material parameters of one wire type.

    Stiffness and damping are expressed per unit strain so that the same
    spec applies to any wire length.
    """

    name: str
    diameter: float  # mm
    axial_stiffness: float  # N per unit strain
    axial_damping: float  # N*s per unit strain rate
    secondary_stiffness: float  # N per unit strain, series spring of the four-element model
    rated_max_tension: float  # N

    def __post_init__(self):
        if self.diameter <= 0:
            raise DomainError(f"wire diameter must be positive, got {self.diameter}")
        if self.axial_stiffness <= 0 or self.secondary_stiffness <= 0:
            raise DomainError("wire stiffnesses must be positive")
        if self.axial_damping < 0:
            raise DomainError("wire damping must be non-negative")
        if self.rated_max_tension <= 0:
            raise DomainError("rated_max_tension must be positive")


@dataclass(frozen=True)
class PulleySpec:
    diameter: float  # mm
    bearing_friction_coeff: float = 0.0012

    def __post_init__(self):
        if self.diameter <= 0:
            raise DomainError(f"pulley diameter must be positive, got {self.diameter}")
        if not 0.0 <= self.bearing_friction_coeff < 0.01:
            raise DomainError("bearing_friction_coeff must lie in [0, 0.01)")


# Stiffness/damping of VB-175 are calibrated so that an 8.1 kg mass on 2 m of
# wire resonates at 6 Hz with damping ratio 0.25. The other values are
# order-of-magnitude placeholders scaled by cross-section.
_VECTRAN_K = (2 * math.pi * 6.0) ** 2 * 8.1 * 2.0
_VECTRAN_C = 2 * 0.25 * math.sqrt((2 * math.pi * 6.0) ** 2 * 8.1 * 8.1) * 2.0

BUILTIN_WIRES: dict[str, WireSpec] = {
    w.name: w
    for w in (
        WireSpec("VB-175", 1.0, _VECTRAN_K, _VECTRAN_C, 4 * _VECTRAN_K, 1700.0),
        WireSpec("SZ-20", 2.0, 4 * _VECTRAN_K, 4 * _VECTRAN_C, 16 * _VECTRAN_K, 4900.0),
        WireSpec("SZ-25", 2.5, 6.25 * _VECTRAN_K, 6.25 * _VECTRAN_C, 25 * _VECTRAN_K, 6900.0),
        WireSpec("SZ-30", 3.0, 9 * _VECTRAN_K, 9 * _VECTRAN_C, 36 * _VECTRAN_K, 9800.0),
        WireSpec("DB-100", 3.0, 9 * _VECTRAN_K, 9 * _VECTRAN_C, 36 * _VECTRAN_K, 9800.0),
    )
}
STANDARD_EFFICIENCY_WIRES = ("VB-175", "SZ-20", "SZ-25", "SZ-30")


def get_wire(name: str) -> WireSpec:
    try:
        return BUILTIN_WIRES[name]
    except KeyError:
        raise NotFoundError(f"unknown wire '{name}'") from None


def per_pulley_efficiency(t_in: float, t_out: float, n_pulleys: int = 2) -> float:
    """Efficiency of one pulley from tensions measured across ``n_pulleys``.

    For the two-pulley rig this is ``sqrt(t_out / t_in)``.
    """
    if t_in <= 0 or t_out <= 0:
        raise DomainError(f"tensions must be positive, got t_in={t_in}, t_out={t_out}")
    if t_out > t_in:
        raise InconsistentMeasurementError(f"t_out={t_out} exceeds t_in={t_in}")
    if int(n_pulleys) != n_pulleys or n_pulleys < 1:
        raise DomainError(f"n_pulleys must be a positive integer, got {n_pulleys}")
    ratio = t_out / t_in
    if n_pulleys == 1:
        return ratio
    if n_pulleys == 2:
        return math.sqrt(ratio)
    return ratio ** (1.0 / n_pulleys)


def ingest_efficiency_trials(trials: Iterable[tuple[float, float]], n_pulleys: int = 2):
    """Mean and sample standard deviation of per-trial per-pulley efficiencies.

    The standard deviation of a single trial is reported as 0.
    """
    values = np.array([per_pulley_efficiency(t_in, t_out, n_pulleys) for t_in, t_out in trials])
    if values.size == 0:
        raise DomainError("at least one trial is required")
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), sd


@dataclass(frozen=True)
class EtaMatrix:
    """Per-wire, per-joint attenuation ``eta_p ** N_ij``."""

    values: np.ndarray
    pulley_counts: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)
        self.pulley_counts.setflags(write=False)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def ones(cls, m: int, n: int) -> "EtaMatrix":
        return build_eta_matrix(np.zeros((m, n), dtype=int), 1.0)


def build_eta_matrix(pulley_counts, eta_p: float) -> EtaMatrix:
    if not 0.0 < eta_p <= 1.0:
        raise DomainError(f"eta_p must lie in (0, 1], got {eta_p}")
    counts = np.array(pulley_counts)
    if counts.ndim != 2:
        raise ContractError(f"pulley_counts must be a 2-D matrix, got shape {counts.shape}")
    if not np.all(counts == np.round(counts)) or np.any(counts < 0):
        raise DomainError("pulley counts must be non-negative integers")
    counts = counts.astype(int)
    values = np.power(float(eta_p), counts.astype(float))
    return EtaMatrix(values=values, pulley_counts=counts)


class LookupResult(NamedTuple):
    value: float
    extrapolated: bool

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class EfficiencyTable:
    """Per-pulley efficiency keyed by (wire, pulley diameter mm, tension N)."""

    entries: Mapping[tuple[str, float, float], float]
    provenance: Mapping[tuple[str, float, float], str] = field(default_factory=dict)

    def __post_init__(self):
        normalized = {}
        for (wire, d, t), e in self.entries.items():
            if not 0.0 < e <= 1.0:
                raise DomainError(f"efficiency {e} for ({wire}, {d}, {t}) outside (0, 1]")
            normalized[(str(wire), float(d), float(t))] = float(e)
        object.__setattr__(self, "entries", normalized)
        prov = {(str(w), float(d), float(t)): p for (w, d, t), p in self.provenance.items()}
        object.__setattr__(self, "provenance", prov)

    def wires(self) -> list[str]:
        return sorted({k[0] for k in self.entries})

    def grid(self, wire: str):
        """Return ``(diameters, tensions, values)`` with ``values[i, j]`` at (d_i, t_j)."""
        keys = [k for k in self.entries if k[0] == wire]
        if not keys:
            raise NotFoundError(f"wire '{wire}' not in efficiency table")
        diameters = np.array(sorted({k[1] for k in keys}))
        tensions = np.array(sorted({k[2] for k in keys}))
        values = np.full((diameters.size, tensions.size), np.nan)
        for _, d, t in keys:
            values[np.searchsorted(diameters, d), np.searchsorted(tensions, t)] = self.entries[(wire, d, t)]
        if np.isnan(values).any():
            raise ContractError(f"efficiency grid for '{wire}' is not rectangular")
        return diameters, tensions, values

    def __getitem__(self, key):
        wire, d, t = key
        return self.entries[(wire, float(d), float(t))]


def _bracket(axis: np.ndarray, x: float):
    """Index of the lower grid node, interpolation weight, and clamp flag."""
    if axis.size == 1:
        return 0, 0.0, x != axis[0]
    clamped = x < axis[0] or x > axis[-1]
    x = min(max(x, axis[0]), axis[-1])
    i = int(np.searchsorted(axis, x, side="right")) - 1
    i = min(i, axis.size - 2)
    w = (x - axis[i]) / (axis[i + 1] - axis[i])
    return i, w, clamped


def lookup_efficiency(table: EfficiencyTable, wire: str, pulley_diameter: float, tension: float) -> LookupResult:
    """Bilinear interpolation in (pulley diameter, tension), clamped at the grid edges."""
    diameters, tensions, values = table.grid(wire)
    i, wd, cd = _bracket(diameters, float(pulley_diameter))
    j, wt, ct = _bracket(tensions, float(tension))
    i1 = min(i + 1, diameters.size - 1)
    j1 = min(j + 1, tensions.size - 1)
    v = (
        (1 - wd) * (1 - wt) * values[i, j]
        + wd * (1 - wt) * values[i1, j]
        + (1 - wd) * wt * values[i, j1]
        + wd * wt * values[i1, j1]
    )
    return LookupResult(float(v), bool(cd or ct))


@dataclass(frozen=True)
class MonotonicityVerdict:
    kind: str  # "pulley" or "wire"
    key: str
    ok: bool
    values: tuple[float, ...]


def check_monotonicity(table: EfficiencyTable, wire_diameters: Mapping[str, float] | None = None,
                       warn: bool = True) -> list[MonotonicityVerdict]:
    """Check efficiency trends against pulley and wire diameter.

    Efficiency should not decrease with pulley diameter and should not
    increase with wire diameter. Violations are reported as warnings.
    """
    verdicts = []
    for wire in table.wires():
        diameters, tensions, values = table.grid(wire)
        for j, t in enumerate(tensions):
            col = values[:, j]
            ok = bool(np.all(np.diff(col) >= 0))
            verdicts.append(MonotonicityVerdict("pulley", f"{wire}@{t:g}N", ok, tuple(col)))
    if wire_diameters is not None:
        known = [w for w in table.wires() if w in wire_diameters]
        known.sort(key=lambda w: wire_diameters[w])
        points = {(d, t) for w in known for (_, d, t) in [k for k in table.entries if k[0] == w]}
        for d, t in sorted(points):
            seq = [table.entries[(w, d, t)] for w in known if (w, d, t) in table.entries]
            if len(seq) < 2:
                continue
            ok = bool(np.all(np.diff(seq) <= 0))
            verdicts.append(MonotonicityVerdict("wire", f"{d:g}mm@{t:g}N", ok, tuple(seq)))
    if warn:
        for v in verdicts:
            if not v.ok:
                warnings.warn(f"efficiency not monotone in {v.kind} diameter for {v.key}: {v.values}")
    return verdicts


def synthetic_loss_ratio_12mm(wire_diameter: float, tension: float) -> float:
    """Two-pulley loss ratio of the built-in table at the 12 mm pulley.

    Grows linearly with wire diameter and eases slightly with tension, spanning
    roughly 0.023-0.076 for 1-3 mm wires at 200-400 N.
    """
    loss = 0.024 + 0.026 * (wire_diameter - 1.0)
    return loss * (1.0 - 0.05 * (tension - 200.0) / 200.0)


def synthetic_efficiency(wire_diameter: float, pulley_diameter: float, tension: float) -> float:
    """Per-pulley efficiency ``1 - c / d`` with ``c`` fixed by the 12 mm loss ratio."""
    e12 = math.sqrt(1.0 - synthetic_loss_ratio_12mm(wire_diameter, tension))
    c = 12.0 * (1.0 - e12)
    return 1.0 - c / pulley_diameter


def default_efficiency_table(wires: Sequence[str] = STANDARD_EFFICIENCY_WIRES,
                             diameters: Sequence[float] = STANDARD_PULLEY_DIAMETERS_MM,
                             tensions: Sequence[float] = STANDARD_TENSIONS_N) -> EfficiencyTable:
    entries, prov = {}, {}
    for w in wires:
        spec = get_wire(w)
        for d in diameters:
            for t in tensions:
                entries[(w, d, t)] = round(synthetic_efficiency(spec.diameter, d, t), 6)
                prov[(w, d, t)] = "synthetic"
    return EfficiencyTable(entries, prov)


def format_efficiency(e: float) -> str:
    return f"{e:.10g}"


def save_efficiency_csv(table: EfficiencyTable, path) -> None:
    from .io import atomic_write_text

    lines = [",".join(CSV_HEADER)]
    for (w, d, t) in sorted(table.entries):
        e = table.entries[(w, d, t)]
        lines.append(f"{w},{d:g},{t:g},{format_efficiency(e)},{table.provenance.get((w, d, t), '')}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_efficiency_csv(path) -> EfficiencyTable:
    entries, prov = {}, {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ContractError(f"unexpected efficiency CSV header {reader.fieldnames}")
        for row in reader:
            key = (row["wire"], float(row["pulley_diameter_mm"]), float(row["tension_n"]))
            entries[key] = float(row["efficiency"])
            prov[key] = row["provenance"]
    table = EfficiencyTable(entries, prov)
    check_monotonicity(table, {w: s.diameter for w, s in BUILTIN_WIRES.items()})
    return table
