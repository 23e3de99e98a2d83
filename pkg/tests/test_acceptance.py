"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``python3 -m pytest tests/test_acceptance.py -v`` (or
``python3 tests/test_acceptance.py``); the lines are repeated in the
terminal summary.
"""

import csv
import math
import time

import numpy as np
import pytest

from conftest import second_order_record
from wiretest.analysis import estimate_bode, second_order_response
from wiretest.cli import main
from wiretest.dynamics import creep_elongation
from wiretest.pulley import (
    STANDARD_EFFICIENCY_WIRES,
    STANDARD_TENSIONS_N,
    EtaMatrix,
    PulleySpec,
    default_efficiency_table,
    get_wire,
    ingest_efficiency_trials,
    per_pulley_efficiency,
)
from wiretest.routing import Joint, JointWrap, RobotModel, ViaPoint, WireRoute, muscle_jacobian, reference_robot
from wiretest.qp import solve_tension, solve_tension_compensated
from wiretest.testbench import RigConfig, RigMode, run_efficiency_rig


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write(path, text):
    path.write_text(text)
    return str(path)


# --- 1 -----------------------------------------------------------------------

def test_criterion_01_efficiency_round_trip(acceptance):
    start = time.perf_counter()
    worst = 0.0
    for k in range(90, 100):
        e = k / 100
        for n in range(1, 8):
            for t in (1.0, 200.0, 400.0):
                worst = max(worst, abs(per_pulley_efficiency(t, t * e ** n, n) - e))
    elapsed = time.perf_counter() - start
    acceptance(1, "efficiency round-trip", worst <= 1e-12 and elapsed < 1.0,
               f"max error {worst:.1e}, {elapsed:.3f} s")


# --- 2 -----------------------------------------------------------------------

def test_criterion_02_loss_band(acceptance):
    start = time.perf_counter()
    table = default_efficiency_table()
    losses = {}
    for k, wire in enumerate(STANDARD_EFFICIENCY_WIRES):
        rig = RigConfig(RigMode.EFFICIENCY, wire=get_wire(wire), pulley_chain=(PulleySpec(12), PulleySpec(12)), seed=k)
        for t in STANDARD_TENSIONS_N:
            pulls = run_efficiency_rig(rig, [t], 20, 0.005, table)
            losses[(wire, t)] = float(np.mean([1 - o / i for i, o in pulls]))
    elapsed = time.perf_counter() - start
    inside = all(0.021 <= v <= 0.081 for v in losses.values())
    acceptance(2, "12 mm two-pulley loss ratio within [0.021, 0.081]", inside and elapsed < 5.0,
               f"range {min(losses.values()):.4f}-{max(losses.values()):.4f}, {elapsed:.2f} s")


# --- 3 -----------------------------------------------------------------------

def test_criterion_03_monotonicity(acceptance, tmp_path):
    start = time.perf_counter()
    code = main(["efficiency", "--out", str(tmp_path)])
    rows = [r for r in _rows(tmp_path / "efficiency_summary.csv") if r["source"] == "table" and r["check"] == "pulley"]
    expected = {f"{w}@{t:g}N" for w in STANDARD_EFFICIENCY_WIRES for t in STANDARD_TENSIONS_N}
    ok = code == 0 and {r["key"] for r in rows} == expected
    for r in rows:
        values = [float(v) for v in r["values"].split()]
        ok = ok and r["monotone"] == "yes" and len(values) == 8 and all(np.diff(values) >= 0)
    elapsed = time.perf_counter() - start
    acceptance(3, "efficiency non-decreasing over 8 pulley diameters", ok and elapsed < 10.0,
               f"{len(rows)} wire/tension series, {elapsed:.2f} s")


# --- 4 and 5 -----------------------------------------------------------------

def _qp_corpus(count=500, seed=2024):
    rng = np.random.default_rng(seed)
    corpus = []
    for k in range(count):
        m = 2 if k % 2 == 0 else 3
        n = int(rng.integers(1, m))
        G = rng.uniform(-0.02, 0.02, size=(m, n))
        tau = rng.uniform(-0.5, 0.5, size=n)
        lam = 10.0 ** rng.uniform(2, 6, size=n)
        lo = rng.uniform(0.0, 10.0, size=m)
        hi = lo + rng.uniform(5.0, 20.0, size=m)
        corpus.append((tau, G, lam, lo, hi))
    return corpus


def _grid_minimum(tau, G, lam, lo, hi, step=0.5):
    axes = [np.arange(a, b + 1e-9, step) for a, b in zip(lo, hi)]
    axes = [np.unique(np.append(ax, b)) for ax, b in zip(axes, hi)]
    T = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    err = tau + T @ G
    return float(np.min(np.sum(err * err * lam, axis=1) + np.sum(T * T, axis=1)))


def test_criterion_04_qp_oracle(acceptance):
    start = time.perf_counter()
    worst_gap, worst_kkt, feasible = -np.inf, 0.0, True
    for tau, G, lam, lo, hi in _qp_corpus():
        sol = solve_tension(tau, G, lam, lo, hi)
        worst_gap = max(worst_gap, sol.objective - _grid_minimum(tau, G, lam, lo, hi))
        worst_kkt = max(worst_kkt, sol.kkt_residual)
        feasible = feasible and bool(np.all(sol.T_ref >= lo) and np.all(sol.T_ref <= hi))
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 1e-6 and feasible and worst_kkt <= 1e-8 and elapsed < 30.0
    acceptance(4, "QP vs 0.5 N grid oracle on 500 problems", ok,
               f"max objective - grid {worst_gap:.3g}, max KKT {worst_kkt:.1e}, feasible {feasible}, {elapsed:.1f} s")


def test_criterion_05_all_ones_degeneracy(acceptance):
    identical = 0
    corpus = _qp_corpus()
    for tau, G, lam, lo, hi in corpus:
        a = solve_tension(tau, G, lam, lo, hi)
        b = solve_tension_compensated(tau, G, EtaMatrix.ones(*G.shape), lam, lo, hi)
        same = (np.array_equal(a.T_ref, b.T_ref) and a.objective == b.objective
                and np.array_equal(a.achieved_torque, b.achieved_torque) and a.iterations == b.iterations)
        identical += same
    acceptance(5, "all-ones eta reproduces the uncompensated solve bit-for-bit", identical == len(corpus),
               f"{identical}/{len(corpus)} identical")


# --- 6 -----------------------------------------------------------------------

def test_criterion_06_jacobian(acceptance):
    a, b, r = 0.10, 0.05, 0.01
    model = RobotModel(
        joints=(Joint("j0", 0.0, math.pi),),
        link_lengths=(0.3,),
        wires=(WireRoute("wrap", (JointWrap(0, r),)),
               WireRoute("cosine", (ViaPoint(0, (-a, 0.0)), ViaPoint(1, (b, 0.0))))),
        pulley_counts=np.zeros((2, 1), dtype=int),
        t_min=np.zeros(2), t_max=np.full(2, 400.0), torque_weights=np.ones(1), posture=np.zeros(1),
    )
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    wrap_exact, worst = True, 0.0
    for q in rng.uniform(0.05, math.pi - 0.05, size=100):
        G = muscle_jacobian(model, [q])
        wrap_exact = wrap_exact and G[0, 0] == r
        length = math.sqrt(a * a + b * b - 2 * a * b * math.cos(math.pi - q))
        worst = max(worst, abs(G[1, 0] + a * b * math.sin(math.pi - q) / length))
    # the reference robot is all wraps, so its Jacobian must be exactly the radii
    ref = reference_robot()
    for q in rng.uniform(-3.0, 3.0, size=(100, 2)):
        wrap_exact = wrap_exact and np.array_equal(
            muscle_jacobian(ref, q), r * np.array([[-1, -1], [1, 1], [-1, 1], [1, -1]]))
    elapsed = time.perf_counter() - start
    acceptance(6, "muscle Jacobian vs analytic over 100 random q", wrap_exact and worst <= 1e-6 and elapsed < 1.0,
               f"wrap exact {wrap_exact}, cosine max error {worst:.1e} m/rad, {elapsed:.3f} s")


# --- 7 -----------------------------------------------------------------------

def test_criterion_07_bode_fidelity(acceptance):
    start = time.perf_counter()
    spec, t, u, y = second_order_record(6.0, 0.1, 120.0, 1e-3)
    curve = estimate_bode(u, y, t[1] - t[0], chirp=spec)
    H = second_order_response(curve.frequency, 6.0, 0.1)
    mag_err = np.abs(curve.magnitude_db - 20 * np.log10(np.abs(H)))
    phase_err = np.abs(curve.phase_deg - np.degrees(np.angle(H)))
    elapsed = time.perf_counter() - start
    ok = curve.frequency.size > 0 and mag_err.max() <= 1.0 and phase_err.max() <= 5.0 and elapsed < 10.0
    acceptance(7, "Bode estimate vs closed-form 6 Hz / zeta 0.1", ok,
               f"{curve.frequency.size} bins, max {mag_err.max():.2f} dB / {phase_err.max():.2f} deg, {elapsed:.2f} s")


# --- 8 and 11 ----------------------------------------------------------------

@pytest.fixture(scope="module")
def freq_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("freq")
    start = time.perf_counter()
    code = main(["freq-response", "--out", str(out)])
    return code, out, time.perf_counter() - start


def _bode(path):
    rows = _rows(path)
    f = np.array([float(r["frequency_hz"]) for r in rows])
    m = np.array([float(r["magnitude_db"]) for r in rows])
    return f, m


def test_criterion_08_fixed_vs_free(acceptance, freq_run):
    code, out, elapsed = freq_run
    f_fix, m_fix = _bode(out / "bode_fixed.csv")
    f_free, m_free = _bode(out / "bode_free.csv")
    k_fix, k_free = int(np.argmax(m_fix)), int(np.argmax(m_free))
    checks = {
        "fixed peak >= +3 dB": m_fix[k_fix] >= 3.0,
        "fixed peak in 4-8 Hz": 4.0 <= f_fix[k_fix] <= 8.0,
        "fixed low-frequency near 0 dB": abs(m_fix[0]) <= 1.5,
        "free low-frequency >= 3 dB below fixed": m_free[0] <= m_fix[0] - 3.0,
        "free peak smaller": m_free[k_free] < m_fix[k_fix],
        "free peak at higher frequency": f_free[k_free] > f_fix[k_fix],
    }
    ok = code == 0 and all(checks.values()) and elapsed < 60.0
    failed = [name for name, good in checks.items() if not good]
    acceptance(8, "fixed vs free load qualitative Bode shape", ok,
               f"fixed peak {m_fix[k_fix]:+.2f} dB @ {f_fix[k_fix]:.2f} Hz, LF {m_fix[0]:+.2f} dB; "
               f"free peak {m_free[k_free]:+.2f} dB @ {f_free[k_free]:.2f} Hz, LF {m_free[0]:+.2f} dB; "
               f"{elapsed:.1f} s" + (f"; failed: {failed}" if failed else ""))


# --- 9 -----------------------------------------------------------------------

def _force_summary(tmp_path, scale):
    cfg = _write(tmp_path / f"fc_{scale}.yaml", f"force_control:\n  plant_loss_scale: {scale}\n")
    out = tmp_path / f"fc_{scale}"
    assert main(["force-control", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "force_control_summary.csv")
    off = np.array([float(r["rmse_off_n"]) for r in rows])
    on = np.array([float(r["rmse_on_n"]) for r in rows])
    return off, on


def test_criterion_09_compensation_benefit(acceptance, tmp_path):
    start = time.perf_counter()
    counts_ok = int(reference_robot().pulley_counts.max()) <= 7
    off, on = _force_summary(tmp_path, 1.0)
    reduction = 100 * (off.mean() - on.mean()) / off.mean()
    perturbed = {}
    for scale in (0.8, 1.2):
        p_off, p_on = _force_summary(tmp_path, scale)
        perturbed[scale] = 100 * (p_off.mean() - p_on.mean()) / p_off.mean()
    elapsed = time.perf_counter() - start
    ok = (counts_ok and off.size == 5 and np.all(on <= 0.5) and np.all(off > on) and reduction > 0
          and all(v > 0 for v in perturbed.values()) and elapsed < 60.0)
    acceptance(9, "pulley-loss compensation lowers force RMSE", ok,
               f"RMSE off {off.mean():.3f} N, on max {on.max():.3f} N, reduction {reduction:.1f}%, "
               f"loss x0.8 {perturbed[0.8]:.1f}%, x1.2 {perturbed[1.2]:.1f}%, {elapsed:.1f} s")


# --- 10 ----------------------------------------------------------------------

def test_criterion_10_creep(acceptance):
    start = time.perf_counter()
    value = creep_elongation(get_wire("DB-100"), 510.0, 12 * 3600.0, 8.2)
    elapsed = time.perf_counter() - start
    acceptance(10, "creep at 510 N, 12 h, 8.2 m", abs(value - 0.40) <= 1e-3 and elapsed < 1.0,
               f"{value:.6f} m")


# --- 11 ----------------------------------------------------------------------

def _csv_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


def test_criterion_11_determinism(acceptance, tmp_path, freq_run):
    runs = {
        "efficiency": ["efficiency", "--seed", "3"],
        "prestretch": ["prestretch", "--seed", "3"],
        "force-control": ["force-control", "--seed", "3"],
        "solve": ["solve", "--seed", "3", "--wrench", "1", "30", "--compensate", "on"],
    }
    results = {}
    for name, argv in runs.items():
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{name}_{rep}"
            assert main(argv + ["--out", str(out)]) == 0
            outputs.append(_csv_bytes(out))
        results[name] = bool(outputs[0]) and outputs[0] == outputs[1]
    code, first, _ = freq_run
    again = tmp_path / "freq_again"
    assert main(["freq-response", "--out", str(again)]) == 0
    results["freq-response"] = code == 0 and _csv_bytes(first) == _csv_bytes(again)
    mismatched = [k for k, v in results.items() if not v]
    acceptance(11, "repeated CLI runs give byte-identical CSVs", not mismatched,
               f"{len(results)} subcommands" + (f"; differ: {mismatched}" if mismatched else ""))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
