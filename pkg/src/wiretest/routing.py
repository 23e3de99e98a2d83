"""Planar robot geometry: wire lengths, muscle-length Jacobian and torque maps."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import yaml

from .errors import ConfigError, ContractError, DomainError, NotFoundError
from .pulley import EtaMatrix

FD_STEP = 1e-6  # rad


@dataclass(frozen=True)
class Joint:
    name: str
    lower: float = -math.pi
    upper: float = math.pi


@dataclass(frozen=True)
class ViaPoint:
    """Fixed anchor on ``link`` (0 is the ground link), in that link's frame."""

    link: int
    position: tuple[float, float]


@dataclass(frozen=True)
class JointWrap:
    """Wire wrapped on a circular pulley at ``joint``.

    A positive radius means the wire lengthens as the joint angle grows.
    """

    joint: int
    radius: float

    def __post_init__(self):
        if self.radius == 0:
            raise DomainError("joint-wrap radius must be non-zero")


RoutingFeature = Union[ViaPoint, JointWrap]


@dataclass(frozen=True)
class WireRoute:
    name: str
    features: tuple[RoutingFeature, ...]


@dataclass(frozen=True)
class RobotModel:
    """Serial planar arm driven by wires.

    Joint ``j`` connects link ``j`` to link ``j + 1``; link 0 is the ground.
    Joint 0 sits at the origin and joint ``j`` at the tip of link ``j``.
    """

    joints: tuple[Joint, ...]
    link_lengths: tuple[float, ...]
    wires: tuple[WireRoute, ...]
    pulley_counts: np.ndarray
    t_min: np.ndarray
    t_max: np.ndarray
    torque_weights: np.ndarray
    posture: np.ndarray

    def __post_init__(self):
        n, m = len(self.joints), len(self.wires)
        if len(self.link_lengths) != n:
            raise ContractError("need one link length per joint")
        if self.pulley_counts.shape != (m, n):
            raise ContractError(f"pulley_counts must be {m}x{n}, got {self.pulley_counts.shape}")
        if np.any(self.pulley_counts < 0):
            raise DomainError("pulley counts must be non-negative")
        if np.any(self.pulley_counts > 7):
            warnings.warn("pulley counts above 7 exceed the reference fixture range")
        if m < n + 1:
            warnings.warn(f"{m} wires cannot fully constrain {n} joints")
        for route in self.wires:
            for f in route.features:
                if isinstance(f, JointWrap) and not 0 <= f.joint < n:
                    raise ContractError(f"wire {route.name}: joint {f.joint} out of range")
                if isinstance(f, ViaPoint) and not 0 <= f.link <= n:
                    raise ContractError(f"wire {route.name}: link {f.link} out of range")
        if self.t_min.shape != (m,) or self.t_max.shape != (m,):
            raise ContractError("tension bounds must have one entry per wire")
        if np.any(self.t_min > self.t_max):
            raise DomainError("t_min must not exceed t_max")
        if self.torque_weights.shape != (n,):
            raise ContractError("torque_weights must have one entry per joint")
        if self.posture.shape != (n,):
            raise ContractError("posture must have one entry per joint")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def m_wires(self) -> int:
        return len(self.wires)

    @property
    def Lambda(self) -> np.ndarray:
        return np.diag(self.torque_weights)


def _check_q(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_joints,):
        raise ContractError(f"q must have {model.n_joints} entries, got shape {q.shape}")
    for j, joint in zip(q, model.joints):
        if not joint.lower <= j <= joint.upper:
            raise DomainError(f"joint {joint.name} angle {j} outside [{joint.lower}, {joint.upper}]")
    return q


def link_frames(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Origins and absolute angles of links 0..n."""
    n = model.n_joints
    origins = np.zeros((n + 1, 2))
    angles = np.zeros(n + 1)
    for k in range(1, n + 1):
        angles[k] = angles[k - 1] + q[k - 1]
        if k >= 2:
            length = model.link_lengths[k - 2]
            origins[k] = origins[k - 1] + length * np.array([math.cos(angles[k - 1]), math.sin(angles[k - 1])])
    return origins, angles


def _point_world(origins, angles, link: int, p) -> np.ndarray:
    c, s = math.cos(angles[link]), math.sin(angles[link])
    return origins[link] + np.array([c * p[0] - s * p[1], s * p[0] + c * p[1]])


def _route(model: RobotModel, wire: int) -> WireRoute:
    if not 0 <= wire < model.m_wires:
        raise NotFoundError(f"wire index {wire} out of range 0..{model.m_wires - 1}")
    return model.wires[wire]


def _via_length(model: RobotModel, route: WireRoute, q) -> float:
    origins, angles = link_frames(model, q)
    pts = [_point_world(origins, angles, f.link, f.position) for f in route.features if isinstance(f, ViaPoint)]
    return float(sum(np.linalg.norm(b - a) for a, b in zip(pts, pts[1:])))


def wire_length(model: RobotModel, wire: int, q) -> float:
    """Straight segments between consecutive via-points plus ``r * q`` for every wrap."""
    route = _route(model, wire)
    q = _check_q(model, q)
    arcs = sum(f.radius * q[f.joint] for f in route.features if isinstance(f, JointWrap))
    return _via_length(model, route, q) + arcs


def _via_dependencies(route: WireRoute) -> set[int]:
    vias = [f for f in route.features if isinstance(f, ViaPoint)]
    deps: set[int] = set()
    for a, b in zip(vias, vias[1:]):
        deps.update(range(min(a.link, b.link), max(a.link, b.link)))
    return deps


def muscle_jacobian(model: RobotModel, q, h: float = FD_STEP) -> np.ndarray:
    """``G[i, j] = d l_i / d q_j``.

    Wrap contributions are exact; via-point segments use central differences
    and only for joints that actually move the segment's end points.
    """
    q = _check_q(model, q)
    G = np.zeros((model.m_wires, model.n_joints))
    for i, route in enumerate(model.wires):
        for f in route.features:
            if isinstance(f, JointWrap):
                G[i, f.joint] += f.radius
        for j in sorted(_via_dependencies(route)):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            G[i, j] += (_via_length(model, route, qp) - _via_length(model, route, qm)) / (2 * h)
    return G


def end_effector(model: RobotModel, q) -> np.ndarray:
    origins, angles = link_frames(model, np.asarray(q, dtype=float))
    n = model.n_joints
    return _point_world(origins, angles, n, (model.link_lengths[-1], 0.0))


def joint_jacobian(model: RobotModel, q) -> np.ndarray:
    """Planar end-effector Jacobian, shape (2, n)."""
    q = _check_q(model, q)
    origins, _ = link_frames(model, q)
    p = end_effector(model, q)
    J = np.zeros((2, model.n_joints))
    for j in range(model.n_joints):
        r = p - origins[j + 1]
        J[:, j] = (-r[1], r[0])
    return J


def joint_torque_from_force(J_r, f_ref) -> np.ndarray:
    J_r = np.atleast_2d(np.asarray(J_r, dtype=float))
    f_ref = np.asarray(f_ref, dtype=float)
    if f_ref.shape != (J_r.shape[0],):
        raise ContractError(f"force of shape {f_ref.shape} does not match Jacobian {J_r.shape}")
    return J_r.T @ f_ref


def torque_from_tension(G, T, eta: EtaMatrix | np.ndarray | None = None) -> np.ndarray:
    """Joint torque ``-(eta * G)^T T``; without ``eta`` this is ``-G^T T``."""
    G = np.asarray(G, dtype=float)
    T = np.asarray(T, dtype=float)
    if T.shape != (G.shape[0],):
        raise ContractError(f"tension of shape {T.shape} does not match G {G.shape}")
    if np.any(T < 0):
        raise DomainError("wire tensions must be non-negative")
    if eta is not None:
        values = eta.values if isinstance(eta, EtaMatrix) else np.asarray(eta, dtype=float)
        if values.shape != G.shape:
            raise ContractError(f"eta {values.shape} does not match G {G.shape}")
        G = values * G
    return -(G.T @ T)


def force_from_torque(J_r, tau) -> np.ndarray:
    """Least-squares end-effector force realizing ``tau = J_r^T f``."""
    return np.linalg.lstsq(np.asarray(J_r).T, np.asarray(tau, dtype=float), rcond=None)[0]


# --- configuration -------------------------------------------------------

def _vector(raw, size: int, key: str) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number or list of numbers, got {raw!r}") from None
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.shape != (size,):
        raise ConfigError(key, f"expected {size} entries, got {arr.size}")
    return arr


def _require(cfg: dict, key: str, where: str = ""):
    if not isinstance(cfg, dict) or key not in cfg:
        raise ConfigError(f"{where}{key}", "missing")
    return cfg[key]


def robot_from_dict(cfg: dict) -> RobotModel:
    joints_raw = _require(cfg, "joints")
    if not isinstance(joints_raw, list) or not joints_raw:
        raise ConfigError("joints", "expected a non-empty list")
    joints = []
    for k, j in enumerate(joints_raw):
        if not isinstance(j, dict):
            raise ConfigError(f"joints[{k}]", "expected a mapping")
        joints.append(Joint(str(j.get("name", f"j{k}")), float(j.get("lower", -math.pi)), float(j.get("upper", math.pi))))
    n = len(joints)
    links = tuple(_vector(_require(cfg, "link_lengths"), n, "link_lengths"))
    wires_raw = _require(cfg, "wires")
    if not isinstance(wires_raw, list) or not wires_raw:
        raise ConfigError("wires", "expected a non-empty list")
    wires = []
    for i, w in enumerate(wires_raw):
        where = f"wires[{i}]."
        features = []
        for k, f in enumerate(_require(w, "routing", where)):
            fkey = f"{where}routing[{k}]"
            try:
                if "wrap" in f:
                    features.append(JointWrap(int(f["wrap"]["joint"]), float(f["wrap"]["radius"])))
                elif "via" in f:
                    pos = tuple(float(v) for v in f["via"]["position"])
                    if len(pos) != 2:
                        raise ConfigError(fkey, "via position needs two coordinates")
                    features.append(ViaPoint(int(f["via"]["link"]), pos))
                else:
                    raise ConfigError(fkey, "expected 'wrap' or 'via'")
            except (KeyError, TypeError, ValueError, DomainError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(fkey, f"malformed routing feature ({exc})") from None
        wires.append(WireRoute(str(w.get("name", f"w{i}")), tuple(features)))
    m = len(wires)
    counts = np.asarray(_require(cfg, "pulley_counts"))
    if counts.shape != (m, n):
        raise ConfigError("pulley_counts", f"expected a {m}x{n} matrix, got shape {counts.shape}")
    bounds = cfg.get("tension_bounds", {})
    t_min = _vector(bounds.get("min", 5.0), m, "tension_bounds.min")
    t_max = _vector(bounds.get("max", 400.0), m, "tension_bounds.max")
    weights = _vector(cfg.get("torque_weights", 1e6), n, "torque_weights")
    posture = _vector(cfg.get("posture", [0.0] * n), n, "posture")
    try:
        return RobotModel(tuple(joints), links, tuple(wires), counts.astype(int), t_min, t_max, weights, posture)
    except (ContractError, DomainError) as exc:
        raise ConfigError("robot", str(exc)) from None


def load_robot(path) -> RobotModel:
    try:
        cfg = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    if "robot" in (cfg or {}):
        cfg = cfg["robot"]
    return robot_from_dict(cfg or {})


REFERENCE_ROBOT = {
    "joints": [{"name": "shoulder"}, {"name": "elbow"}],
    "link_lengths": [0.20, 0.15],
    "wires": [
        {"name": "w1", "routing": [{"wrap": {"joint": 0, "radius": -0.01}}, {"wrap": {"joint": 1, "radius": -0.01}}]},
        {"name": "w2", "routing": [{"wrap": {"joint": 0, "radius": 0.01}}, {"wrap": {"joint": 1, "radius": 0.01}}]},
        {"name": "w3", "routing": [{"wrap": {"joint": 0, "radius": -0.01}}, {"wrap": {"joint": 1, "radius": 0.01}}]},
        {"name": "w4", "routing": [{"wrap": {"joint": 0, "radius": 0.01}}, {"wrap": {"joint": 1, "radius": -0.01}}]},
    ],
    "pulley_counts": [[3, 5], [4, 6], [5, 7], [3, 6]],
    "tension_bounds": {"min": 5.0, "max": 400.0},
    "torque_weights": 1e6,
    "posture": [1.12, 0.70],
}


def reference_robot() -> RobotModel:
    """Planar two-joint arm coupled by four wires with 10 mm moment arms."""
    return robot_from_dict(REFERENCE_ROBOT)
