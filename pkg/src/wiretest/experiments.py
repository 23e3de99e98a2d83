"""The four reproducible experiments plus one-shot tension solving.

Each ``run_*`` function takes a plain-dict scenario section (as loaded from
YAML), writes CSV artifacts, a text report and a manifest into ``out``, and
returns the :class:`ExperimentReport`.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import io
from .analysis import BODE_HEADER, ExperimentReport, estimate_bode
from .dynamics import DYNEEMA_CREEP, CreepParams, creep_elongation
from .errors import ConfigError, NotFoundError
from .pulley import (
    BUILTIN_WIRES,
    STANDARD_EFFICIENCY_WIRES,
    STANDARD_PULLEY_DIAMETERS_MM,
    STANDARD_TENSIONS_N,
    EfficiencyTable,
    PulleySpec,
    build_eta_matrix,
    check_monotonicity,
    default_efficiency_table,
    get_wire,
    ingest_efficiency_trials,
    load_efficiency_csv,
    lookup_efficiency,
    save_efficiency_csv,
)
from .qp import solve_tension, solve_tension_compensated
from .routing import (
    REFERENCE_ROBOT,
    RobotModel,
    joint_jacobian,
    joint_torque_from_force,
    load_robot,
    muscle_jacobian,
    robot_from_dict,
)
from .testbench import (
    TRACE_HEADER,
    ChirpSpec,
    ForceRamp,
    RigConfig,
    RigMode,
    calibrated_linear_load_config,
    run_efficiency_rig,
    run_force_control,
    run_linear_load,
)

EFFICIENCY_KEYS = {"wires", "diameters", "tensions", "trials", "noise", "table"}
FREQ_KEYS = {"chirp", "rig", "n_bins", "trace_decimation"}
PRESTRETCH_KEYS = {"wire", "tension", "length", "duration_h", "step_h", "creep"}
FORCE_KEYS = {"robot", "ramp", "repetitions", "tension_noise", "wire", "pulley_diameter",
              "efficiency_tension", "plant_loss_scale", "compensate", "table"}
SOLVE_KEYS = {"robot", "wrench", "posture", "compensate", "wire", "pulley_diameter", "efficiency_tension"}


def derive_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence([master, *key]).generate_state(1)[0])


def _check_keys(section: dict, allowed: set[str], name: str) -> dict:
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(name, "expected a mapping")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}", "unknown key")
    return section


def _number(section: dict, key: str, default, name: str, positive: bool = False, integer: bool = False):
    value = section.get(key, default)
    try:
        value = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}.{key}", f"expected a number, got {value!r}") from None
    if positive and value <= 0:
        raise ConfigError(f"{name}.{key}", "must be positive")
    return value


def _table(section: dict, name: str) -> EfficiencyTable:
    path = section.get("table")
    if path is None:
        return default_efficiency_table()
    try:
        return load_efficiency_csv(path)
    except OSError as exc:
        raise ConfigError(f"{name}.table", str(exc)) from None


def _finish(out: Path, report: ExperimentReport, scenario: str, config: dict, seed: int,
            files: list[str]) -> ExperimentReport:
    report_name = f"{scenario}_report.txt"
    report.artifacts = sorted(files + [report_name])
    io.atomic_write_text(out / report_name, report.to_text())
    io.write_manifest(out, scenario, config, seed, report.artifacts)
    return report


# --- efficiency ------------------------------------------------------------

def run_efficiency(section: dict, out, seed: int = 0, trials: int | None = None,
                   noise: float | None = None) -> ExperimentReport:
    name = "efficiency"
    section = _check_keys(section, EFFICIENCY_KEYS, name)
    wires = section.get("wires", list(STANDARD_EFFICIENCY_WIRES))
    for w in wires:
        if w not in BUILTIN_WIRES:
            raise ConfigError(f"{name}.wires", f"unknown wire '{w}'")
    diameters = [float(d) for d in section.get("diameters", STANDARD_PULLEY_DIAMETERS_MM)]
    tensions = [float(t) for t in section.get("tensions", STANDARD_TENSIONS_N)]
    trials = trials if trials is not None else _number(section, "trials", 20, name, True, True)
    noise = noise if noise is not None else _number(section, "noise", 0.005, name)
    if noise < 0:
        raise ConfigError(f"{name}.noise", "must be non-negative")
    truth = _table(section, name)
    config = {"wires": wires, "diameters": diameters, "tensions": tensions, "trials": trials,
              "noise": noise, "table": section.get("table")}
    out = Path(out)

    entries, prov, trial_rows, loss_rows = {}, {}, [], []
    for wi, w in enumerate(wires):
        for di, d in enumerate(diameters):
            rig = RigConfig(mode=RigMode.EFFICIENCY, wire=get_wire(w), pulley_chain=(PulleySpec(d), PulleySpec(d)),
                            seed=derive_seed(seed, wi, di))
            pulls = run_efficiency_rig(rig, tensions, trials, noise, truth)
            for ti, t in enumerate(tensions):
                chunk = pulls[ti * trials:(ti + 1) * trials]
                mean, sd = ingest_efficiency_trials(chunk, n_pulleys=2)
                entries[(w, d, t)] = mean
                prov[(w, d, t)] = "simulated"
                loss = float(np.mean([1 - o / i for i, o in chunk]))
                loss_rows.append((w, d, t, mean, sd, loss))
                trial_rows.extend((w, d, t, k, i, o) for k, (i, o) in enumerate(chunk))
    table = EfficiencyTable(entries, prov)
    wire_d = {w: BUILTIN_WIRES[w].diameter for w in wires}
    # trends of the table driving the rig, then of the noisy measured means
    active = EfficiencyTable({k: lookup_efficiency(truth, *k).value for k in entries}, {k: "active" for k in entries})
    verdicts = [("table", v) for v in check_monotonicity(active, wire_d)]
    verdicts += [("measured", v) for v in check_monotonicity(table, wire_d, warn=False)]

    save_efficiency_csv(table, out / "efficiency_table.csv")
    io.write_csv(out / "efficiency_trials.csv", ("wire", "pulley_diameter_mm", "tension_n", "trial", "tin_n", "tout_n"),
                 trial_rows)
    io.write_csv(out / "efficiency_stats.csv",
                 ("wire", "pulley_diameter_mm", "tension_n", "efficiency_mean", "efficiency_sd", "loss_ratio_two_pulley"),
                 loss_rows)
    io.write_csv(out / "efficiency_summary.csv", ("source", "check", "key", "monotone", "values"),
                 [(src, v.kind, v.key, "yes" if v.ok else "no", " ".join(io.fmt(x) for x in v.values))
                  for src, v in verdicts])

    report = ExperimentReport(name, io.config_hash(config))
    smallest = min(diameters)
    for w, d, t, mean, sd, loss in loss_rows:
        if d == smallest:
            report.add(f"loss_ratio[{w},{d:g}mm,{t:g}N]", loss, "efficiency_stats.csv")
    for source in ("table", "measured"):
        sub = [v for src, v in verdicts if src == source]
        report.add(f"monotone_checks_passed[{source}]", sum(v.ok for v in sub), "efficiency_summary.csv")
        report.add(f"monotone_checks_total[{source}]", len(sub), "efficiency_summary.csv")
    for src, v in verdicts:
        if src == "table" or not v.ok:
            report.notes.append(f"{src} {v.kind}-diameter monotonicity {v.key}: {'PASS' if v.ok else 'FAIL'}")
    files = ["efficiency_table.csv", "efficiency_trials.csv", "efficiency_stats.csv", "efficiency_summary.csv"]
    return _finish(out, report, name, config, seed, files)


# --- frequency response ------------------------------------------------------

def _chirp_from(section: dict, name: str) -> ChirpSpec:
    c = _check_keys(section.get("chirp"), {"t_min", "t_max", "f_low", "f_high", "duration"}, f"{name}.chirp")
    base = ChirpSpec()
    try:
        return ChirpSpec(
            t_min_tension=_number(c, "t_min", base.t_min_tension, f"{name}.chirp"),
            t_max_tension=_number(c, "t_max", base.t_max_tension, f"{name}.chirp"),
            f_low=_number(c, "f_low", base.f_low, f"{name}.chirp"),
            f_high=_number(c, "f_high", base.f_high, f"{name}.chirp"),
            duration=_number(c, "duration", base.duration, f"{name}.chirp", positive=True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{name}.chirp", str(exc)) from None


RIG_OVERRIDES = {"dt", "wire", "load_mass", "actuator_mass", "wire_length", "servo_bandwidth_hz",
                 "pulley_diameter", "motor_max_tension"}


def run_freq_response(section: dict, out, seed: int = 0) -> ExperimentReport:
    name = "freq_response"
    section = _check_keys(section, FREQ_KEYS, name)
    spec = _chirp_from(section, name)
    rig = _check_keys(section.get("rig"), RIG_OVERRIDES, f"{name}.rig")
    n_bins = _number(section, "n_bins", 24, name, True, True)
    decimation = _number(section, "trace_decimation", 10, name, True, True)
    overrides = {}
    for key in ("dt", "load_mass", "actuator_mass", "wire_length", "servo_bandwidth_hz", "motor_max_tension"):
        if key in rig:
            overrides[key] = _number(rig, key, None, f"{name}.rig", positive=True)
    if "wire" in rig:
        try:
            overrides["wire"] = get_wire(rig["wire"])
        except NotFoundError as exc:
            raise ConfigError(f"{name}.rig.wire", str(exc)) from None
    if "pulley_diameter" in rig:
        d = _number(rig, "pulley_diameter", None, f"{name}.rig", positive=True)
        overrides["pulley_chain"] = (PulleySpec(d), PulleySpec(d))
    overrides["duration"] = spec.duration
    overrides["seed"] = seed

    out = Path(out)
    files = []
    curves = {}
    configs = {}
    for mode, tag in ((RigMode.LINEAR_LOAD_FIXED, "fixed"), (RigMode.LINEAR_LOAD_FREE, "free")):
        try:
            cfg = calibrated_linear_load_config(mode, spec, **overrides)
        except ValueError as exc:
            raise ConfigError(f"{name}.rig", str(exc)) from None
        configs[tag] = cfg.as_dict()
        trace = run_linear_load(cfg, spec)
        curve = estimate_bode(trace.commanded_tension, trace.actual_tension_in, cfg.dt,
                              band=(spec.f_low, spec.f_high), n_bins=n_bins, chirp=spec)
        curves[tag] = (curve, trace)
        io.write_csv(out / f"bode_{tag}.csv", BODE_HEADER, curve.rows())
        rows = list(trace.rows())[::decimation]
        io.write_csv(out / f"trace_{tag}.csv", TRACE_HEADER, rows)
        files += [f"bode_{tag}.csv", f"trace_{tag}.csv"]

    config = {"chirp": spec.__dict__, "n_bins": n_bins, "rigs": configs, "trace_decimation": decimation}
    report = ExperimentReport(name, io.config_hash(config))
    for tag, (curve, trace) in curves.items():
        f_peak, m_peak = curve.peak()
        report.add(f"{tag}.low_freq_magnitude_db@{curve.frequency[0]:.2f}Hz", curve.low_frequency_magnitude(), f"bode_{tag}.csv")
        report.add(f"{tag}.peak_magnitude_db", m_peak, f"bode_{tag}.csv")
        report.add(f"{tag}.peak_frequency_hz", f_peak, f"bode_{tag}.csv")
        crossing = _phase_crossing(curve, -90.0)
        if crossing is not None:
            report.add(f"{tag}.phase_-90deg_crossing_hz", crossing, f"bode_{tag}.csv")
        report.add(f"{tag}.stroke_or_slack_events", len(trace.events), f"trace_{tag}.csv")
        for f, reason in curve.dropped:
            report.notes.append(f"{tag}: dropped bin {f:.3f} Hz ({reason})")
    fixed, free = curves["fixed"][0], curves["free"][0]
    report.add("low_freq_drop_free_vs_fixed_db", fixed.low_frequency_magnitude() - free.low_frequency_magnitude(),
               "bode_fixed.csv,bode_free.csv")
    return _finish(out, report, name, config, seed, files)


def _phase_crossing(curve, level: float):
    below = np.flatnonzero(curve.phase_deg <= level)
    if below.size == 0 or below[0] == 0:
        return None
    k = below[0]
    f0, f1 = curve.frequency[k - 1], curve.frequency[k]
    p0, p1 = curve.phase_deg[k - 1], curve.phase_deg[k]
    return float(f0 + (level - p0) * (f1 - f0) / (p1 - p0))


# --- pre-stretch ---------------------------------------------------------------

CREEP_DATUM = (510.0, 12.0, 8.2, 0.4)  # N, h, m, m


def run_prestretch(section: dict, out, seed: int = 0) -> ExperimentReport:
    name = "prestretch"
    section = _check_keys(section, PRESTRETCH_KEYS, name)
    wire = section.get("wire", "DB-100")
    if wire not in BUILTIN_WIRES:
        raise ConfigError(f"{name}.wire", f"unknown wire '{wire}'")
    tension_n = _number(section, "tension", 510.0, name)
    length = _number(section, "length", 8.2, name, positive=True)
    hours = _number(section, "duration_h", 12.0, name, positive=True)
    step = _number(section, "step_h", 0.25, name, positive=True)
    creep = _check_keys(section.get("creep"), {"alpha", "t0", "tension_ref"}, f"{name}.creep")
    try:
        params = CreepParams(
            alpha=_number(creep, "alpha", DYNEEMA_CREEP.alpha, f"{name}.creep"),
            t0=_number(creep, "t0", DYNEEMA_CREEP.t0, f"{name}.creep"),
            tension_ref=_number(creep, "tension_ref", DYNEEMA_CREEP.tension_ref, f"{name}.creep"),
        )
    except ValueError as exc:
        raise ConfigError(f"{name}.creep", str(exc)) from None
    if tension_n < 0:
        raise ConfigError(f"{name}.tension", "must be non-negative")
    spec = get_wire(wire)
    n = int(math.floor(hours / step + 1e-9))
    times = [k * step for k in range(n + 1)]
    if times[-1] < hours:
        times.append(hours)
    rows = []
    for h in times:
        d = creep_elongation(spec, tension_n, h * 3600.0, length, params)
        rows.append((h, d, length + d))
    out = Path(out)
    io.write_csv(out / "prestretch.csv", ("t_h", "elongation_m", "length_m"), rows)

    config = {"wire": wire, "tension": tension_n, "length": length, "duration_h": hours, "step_h": step,
              "creep": params.__dict__}
    report = ExperimentReport(name, io.config_hash(config))
    report.add("final_elongation_m", rows[-1][1], "prestretch.csv")
    t_p, h_p, l_p, d_p = CREEP_DATUM
    datum = creep_elongation(spec, t_p, h_p * 3600.0, l_p, params)
    report.add("datum_elongation_m[510N,12h,8.2m]", datum, "prestretch.csv")
    matched = abs(datum - d_p) <= 1e-3
    report.notes.append(f"reference datum 0.4 m at 12 h {'MATCHED' if matched else 'NOT matched'} "
                        f"by the active creep calibration ({datum:.4f} m)")
    return _finish(out, report, name, config, seed, ["prestretch.csv"])


# --- force control -----------------------------------------------------------

def _robot(section: dict, name: str) -> RobotModel:
    raw = section.get("robot")
    if raw is None:
        return robot_from_dict(REFERENCE_ROBOT)
    if isinstance(raw, str):
        try:
            return load_robot(raw)
        except OSError as exc:
            raise ConfigError(f"{name}.robot", str(exc)) from None
    return robot_from_dict(raw)


def _eta_p(section: dict, table: EfficiencyTable, name: str) -> float:
    wire = section.get("wire", "VB-175")
    d = _number(section, "pulley_diameter", 12.0, name, positive=True)
    t = _number(section, "efficiency_tension", 200.0, name, positive=True)
    try:
        return lookup_efficiency(table, wire, d, t).value
    except NotFoundError as exc:
        raise ConfigError(f"{name}.wire", str(exc)) from None


def _compensate_modes(value: str, key: str) -> list[bool]:
    value = str(value).lower()
    modes = {"on": [True], "off": [False], "both": [False, True], "true": [True], "false": [False]}
    if value not in modes:
        raise ConfigError(key, f"expected on, off or both, got {value!r}")
    return modes[value]


def run_force_control_experiment(section: dict, out, seed: int = 0, compensate: str | None = None,
                                 noise: float | None = None) -> ExperimentReport:
    name = "force_control"
    section = _check_keys(section, FORCE_KEYS, name)
    robot = _robot(section, name)
    table = _table(section, name)
    eta_p = _eta_p(section, table, name)
    ramp_cfg = _check_keys(section.get("ramp"), {"start", "stop", "duration", "dt"}, f"{name}.ramp")
    ramp = ForceRamp(
        start=_number(ramp_cfg, "start", 0.0, f"{name}.ramp"),
        stop=_number(ramp_cfg, "stop", 40.0, f"{name}.ramp"),
        duration=_number(ramp_cfg, "duration", 4.0, f"{name}.ramp", positive=True),
        dt=_number(ramp_cfg, "dt", 0.01, f"{name}.ramp", positive=True),
    )
    reps = _number(section, "repetitions", 5, name, True, True)
    tension_noise = noise if noise is not None else _number(section, "tension_noise", 0.002, name)
    loss_scale = _number(section, "plant_loss_scale", 1.0, name, positive=True)
    modes = _compensate_modes(compensate or section.get("compensate", "both"), f"{name}.compensate")
    plant_eta_p = 1.0 - loss_scale * (1.0 - eta_p)
    if not 0 < plant_eta_p <= 1:
        raise ConfigError(f"{name}.plant_loss_scale", "gives a plant efficiency outside (0, 1]")
    eta = build_eta_matrix(robot.pulley_counts, eta_p)
    plant = build_eta_matrix(robot.pulley_counts, plant_eta_p)

    out = Path(out)
    files, run_rows = [], []
    results: dict[bool, list[float]] = {m: [] for m in modes}
    for rep in range(reps):
        rep_seed = derive_seed(seed, rep)
        for comp in modes:
            trace = run_force_control(robot, eta, plant, ramp, comp, tension_noise=tension_noise, seed=rep_seed)
            tag = "on" if comp else "off"
            fname = f"force_control_trace_{tag}_{rep}.csv"
            header = ("t", "f_cmd_n", "f_real_n", *(f"T_{w.name}_n" for w in robot.wires))
            io.write_csv(out / fname, header, trace.rows())
            files.append(fname)
            results[comp].append(trace.rmse)
            run_rows.append((rep, tag, rep_seed, trace.rmse))
    io.write_csv(out / "force_control_runs.csv", ("repetition", "compensate", "seed", "rmse_n"), run_rows)
    files.append("force_control_runs.csv")

    config = {"robot": section.get("robot", "reference"), "ramp": ramp.__dict__, "repetitions": reps,
              "tension_noise": tension_noise, "eta_p": eta_p, "plant_eta_p": plant_eta_p,
              "modes": ["on" if m else "off" for m in modes]}
    report = ExperimentReport(name, io.config_hash(config))
    report.add("eta_p_belief", eta_p, "config")
    report.add("eta_p_plant", plant_eta_p, "config")
    for comp, values in results.items():
        report.add(f"rmse_mean_{'on' if comp else 'off'}_n", float(np.mean(values)), "force_control_runs.csv")
    if len(modes) == 2:
        reductions = [(off - on) / off for off, on in zip(results[False], results[True])]
        io.write_csv(out / "force_control_summary.csv", ("repetition", "rmse_off_n", "rmse_on_n", "reduction_pct"),
                     [(k, off, on, 100 * r) for k, (off, on, r) in
                      enumerate(zip(results[False], results[True], reductions))])
        files.append("force_control_summary.csv")
        off_mean, on_mean = np.mean(results[False]), np.mean(results[True])
        report.add("reduction_pct", 100 * (off_mean - on_mean) / off_mean, "force_control_summary.csv")
        report.add("repetitions_with_positive_reduction", sum(r > 0 for r in reductions), "force_control_summary.csv")
    return _finish(out, report, name, config, seed, files)


# --- solve -------------------------------------------------------------------

def solve_once(section: dict, compensate: str | None = None):
    """Tension distribution for one wrench; returns (robot, solution, tau_ref)."""
    name = "solve"
    section = _check_keys(section, SOLVE_KEYS, name)
    robot = _robot(section, name)
    wrench = section.get("wrench", [0.0, 0.0])
    try:
        wrench = np.asarray(wrench, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}.wrench", "expected two numbers") from None
    if wrench.shape != (2,):
        raise ConfigError(f"{name}.wrench", "expected two numbers [fx, fy]")
    q = np.asarray(section.get("posture", robot.posture), dtype=float)
    if q.shape != (robot.n_joints,):
        raise ConfigError(f"{name}.posture", f"expected {robot.n_joints} joint angles")
    comp = _compensate_modes(compensate or section.get("compensate", "off"), f"{name}.compensate")
    if len(comp) != 1:
        raise ConfigError(f"{name}.compensate", "solve takes on or off")
    G = muscle_jacobian(robot, q)
    tau = joint_torque_from_force(joint_jacobian(robot, q), wrench)
    if comp[0]:
        eta = build_eta_matrix(robot.pulley_counts, _eta_p(section, default_efficiency_table(), name))
        sol = solve_tension_compensated(tau, G, eta, robot.torque_weights, robot.t_min, robot.t_max)
    else:
        sol = solve_tension(tau, G, robot.torque_weights, robot.t_min, robot.t_max)
    return robot, sol, tau
