import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wiretest.errors import ContractError, DomainError, InconsistentMeasurementError, NotFoundError
from wiretest.pulley import (
    BUILTIN_WIRES,
    STANDARD_EFFICIENCY_WIRES,
    STANDARD_PULLEY_DIAMETERS_MM,
    STANDARD_TENSIONS_N,
    EfficiencyTable,
    EtaMatrix,
    PulleySpec,
    WireSpec,
    build_eta_matrix,
    check_monotonicity,
    default_efficiency_table,
    get_wire,
    ingest_efficiency_trials,
    load_efficiency_csv,
    lookup_efficiency,
    per_pulley_efficiency,
    save_efficiency_csv,
    synthetic_loss_ratio_12mm,
)


# --- per_pulley_efficiency ---

def test_lossless():
    assert per_pulley_efficiency(400, 400, 2) == 1.0


def test_perfect_square():
    assert per_pulley_efficiency(100, 81, 2) == pytest.approx(0.9, abs=1e-15)


def test_loss_band_endpoint():
    # two-pulley loss ratio 0.081 at 400 N
    assert per_pulley_efficiency(400, 367.6, 2) == pytest.approx(math.sqrt(1 - 0.081), abs=1e-12)
    # the quoted 0.9587 is a 4-digit figure; sqrt(0.919) = 0.958645
    assert per_pulley_efficiency(400, 367.6, 2) == pytest.approx(0.9587, abs=1e-4)


def test_single_and_many_pulleys():
    assert per_pulley_efficiency(100, 90, 1) == pytest.approx(0.9)
    assert per_pulley_efficiency(100, 100 * 0.95 ** 5, 5) == pytest.approx(0.95, abs=1e-12)


@pytest.mark.parametrize("t_in,t_out", [(0, 0), (-1, 1), (100, 0), (100, -5)])
def test_nonpositive_tension(t_in, t_out):
    with pytest.raises(DomainError):
        per_pulley_efficiency(t_in, t_out)


def test_output_exceeds_input():
    with pytest.raises(InconsistentMeasurementError):
        per_pulley_efficiency(100, 101)


def test_bad_pulley_count():
    with pytest.raises(DomainError):
        per_pulley_efficiency(100, 90, 0)
    with pytest.raises(DomainError):
        per_pulley_efficiency(100, 90, 1.5)


@given(e=st.floats(0.5, 1.0), t=st.floats(1.0, 1e4), n=st.integers(1, 7))
def test_round_trip(e, t, n):
    t_out = t * e ** n
    if t_out <= 0:
        return
    assert per_pulley_efficiency(t, t_out, n) == pytest.approx(e, abs=1e-12)


# --- build_eta_matrix ---

def test_eta_zero_counts_is_ones():
    eta = build_eta_matrix(np.zeros((3, 2), dtype=int), 0.9)
    assert np.array_equal(eta.values, np.ones((3, 2)))
    assert np.array_equal(EtaMatrix.ones(3, 2).values, np.ones((3, 2)))


def test_eta_direct_power():
    assert build_eta_matrix([[2]], 0.95).values[0, 0] == pytest.approx(0.9025, abs=1e-15)


def test_eta_seven_pulleys():
    product = 1.0
    for _ in range(7):
        product *= 0.95
    assert build_eta_matrix([[7]], 0.95).values[0, 0] == pytest.approx(product, rel=1e-14)
    assert round(product, 5) == 0.69834


def test_eta_validation():
    with pytest.raises(DomainError):
        build_eta_matrix([[1]], 0.0)
    with pytest.raises(DomainError):
        build_eta_matrix([[1]], 1.01)
    with pytest.raises(DomainError):
        build_eta_matrix([[-1]], 0.9)
    with pytest.raises(DomainError):
        build_eta_matrix([[1.5]], 0.9)
    with pytest.raises(ContractError):
        build_eta_matrix([1, 2], 0.9)


def test_eta_read_only():
    eta = build_eta_matrix([[1, 2]], 0.9)
    with pytest.raises(ValueError):
        eta.values[0, 0] = 1.0


@given(counts=st.lists(st.integers(0, 6), min_size=4, max_size=4), eta_p=st.floats(0.5, 1.0),
       k=st.integers(0, 3))
def test_eta_monotone_in_counts(counts, eta_p, k):
    base = np.array(counts).reshape(2, 2)
    more = base.copy()
    more.flat[k] += 1
    a = build_eta_matrix(base, eta_p).values
    b = build_eta_matrix(more, eta_p).values
    assert b.flat[k] <= a.flat[k]


# --- lookup_efficiency ---

def _small_table():
    return EfficiencyTable({
        ("A", 12, 200): 0.96, ("A", 14, 200): 0.98,
        ("A", 12, 400): 0.97, ("A", 14, 400): 0.99,
    })


def test_lookup_grid_hit():
    r = lookup_efficiency(_small_table(), "A", 12, 200)
    assert r.value == 0.96 and not r.extrapolated


def test_lookup_midpoint():
    r = lookup_efficiency(_small_table(), "A", 13, 200)
    assert r.value == pytest.approx(0.97, abs=1e-15)
    assert not r.extrapolated


def test_lookup_bilinear_centre():
    assert lookup_efficiency(_small_table(), "A", 13, 300).value == pytest.approx(0.975, abs=1e-15)


def test_lookup_clamps_and_flags():
    r = lookup_efficiency(_small_table(), "A", 10, 200)
    assert r.value == 0.96 and r.extrapolated
    r = lookup_efficiency(_small_table(), "A", 14, 500)
    assert r.value == 0.99 and r.extrapolated


def test_lookup_unknown_wire():
    with pytest.raises(NotFoundError):
        lookup_efficiency(_small_table(), "B", 12, 200)


def test_table_rejects_bad_values():
    with pytest.raises(DomainError):
        EfficiencyTable({("A", 12, 200): 1.2})
    with pytest.raises(DomainError):
        EfficiencyTable({("A", 12, 200): 0.0})


def test_default_table_exact_at_grid_points():
    table = default_efficiency_table()
    for key, value in table.entries.items():
        assert lookup_efficiency(table, *key).value == value


@settings(max_examples=60)
@given(d=st.floats(12.0, 60.0), t=st.floats(200.0, 400.0), wire=st.sampled_from(STANDARD_EFFICIENCY_WIRES))
def test_lookup_continuous(d, t, wire):
    table = default_efficiency_table()
    h = 1e-7
    a = lookup_efficiency(table, wire, d, t).value
    b = lookup_efficiency(table, wire, min(d + h, 60.0), min(t + h, 400.0)).value
    # slopes of the built-in table are far below 1 per mm or per N
    assert abs(a - b) < 1e-7


@settings(max_examples=60)
@given(d=st.floats(12.0, 60.0), t=st.floats(200.0, 400.0))
def test_lookup_within_cell_bounds(d, t):
    table = default_efficiency_table()
    diameters, tensions, values = table.grid("SZ-25")
    i = min(np.searchsorted(diameters, d, side="right") - 1, diameters.size - 2)
    corners = values[i:i + 2, :]
    v = lookup_efficiency(table, "SZ-25", d, t).value
    assert corners.min() - 1e-15 <= v <= corners.max() + 1e-15


# --- ingest_efficiency_trials ---

def test_ingest_constant():
    mean, sd = ingest_efficiency_trials([(100, 81)] * 20)
    assert mean == pytest.approx(0.9, abs=1e-15)
    assert sd == pytest.approx(0.0, abs=1e-15)


def test_ingest_two_values():
    mean, sd = ingest_efficiency_trials([(100, 81), (100, 100)])
    assert mean == pytest.approx(0.95, abs=1e-15)
    assert sd == pytest.approx(math.sqrt(0.005), abs=1e-12)
    assert round(sd, 4) == 0.0707


def test_ingest_single():
    assert ingest_efficiency_trials([(400, 400)]) == (1.0, 0.0)


def test_ingest_empty():
    with pytest.raises(DomainError):
        ingest_efficiency_trials([])


@given(st.lists(st.tuples(st.floats(1.0, 500.0), st.floats(0.5, 1.0)), min_size=1, max_size=30))
def test_ingest_matches_direct_fold(pairs):
    trials = [(t, t * r) for t, r in pairs]
    total = 0.0
    for t_in, t_out in trials:
        total += math.sqrt(t_out / t_in)
    mean, _ = ingest_efficiency_trials(trials)
    assert mean == pytest.approx(total / len(trials), rel=1e-12)


# --- synthetic table and monotonicity ---

def test_synthetic_loss_band_at_12mm():
    for w in STANDARD_EFFICIENCY_WIRES:
        for t in STANDARD_TENSIONS_N:
            loss = synthetic_loss_ratio_12mm(get_wire(w).diameter, t)
            assert 0.021 <= loss <= 0.081


def test_default_table_monotone():
    table = default_efficiency_table()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        verdicts = check_monotonicity(table, {w: s.diameter for w, s in BUILTIN_WIRES.items()})
    assert verdicts and all(v.ok for v in verdicts)
    kinds = {v.kind for v in verdicts}
    assert kinds == {"pulley", "wire"}
    assert sum(v.kind == "pulley" for v in verdicts) == len(STANDARD_EFFICIENCY_WIRES) * len(STANDARD_TENSIONS_N)
    assert sum(v.kind == "wire" for v in verdicts) == len(STANDARD_PULLEY_DIAMETERS_MM) * len(STANDARD_TENSIONS_N)


def test_monotonicity_violation_warns():
    table = EfficiencyTable({("A", 12, 200): 0.98, ("A", 14, 200): 0.97})
    with pytest.warns(UserWarning, match="not monotone"):
        verdicts = check_monotonicity(table)
    assert not verdicts[0].ok


def test_csv_round_trip(tmp_path):
    table = default_efficiency_table()
    path = tmp_path / "eff.csv"
    save_efficiency_csv(table, path)
    loaded = load_efficiency_csv(path)
    assert loaded.entries == table.entries
    assert set(loaded.provenance.values()) == {"synthetic"}


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ContractError):
        load_efficiency_csv(path)


def test_grid_not_rectangular():
    table = EfficiencyTable({("A", 12, 200): 0.96, ("A", 14, 400): 0.97})
    with pytest.raises(ContractError):
        table.grid("A")


# --- specs ---

def test_spec_validation():
    with pytest.raises(DomainError):
        PulleySpec(0)
    with pytest.raises(DomainError):
        PulleySpec(12, bearing_friction_coeff=0.02)
    with pytest.raises(DomainError):
        WireSpec("x", 1.0, -1.0, 1.0, 1.0, 100.0)
    with pytest.raises(NotFoundError):
        get_wire("nope")


def test_builtin_vectran_resonates_near_6hz():
    # 8.1 kg on 2 m of wire, stiffness per unit strain k -> k/L N/m
    k = get_wire("VB-175").axial_stiffness / 2.0
    assert math.sqrt(k / 8.1) / (2 * math.pi) == pytest.approx(6.0, rel=1e-12)
