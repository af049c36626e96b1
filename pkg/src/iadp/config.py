"""Experiment configuration: schema, presets, overrides and validation.

A config is a nested mapping with the sections ``plant``, ``controller``,
``critic``, ``trajectory``, ``run`` and ``validation``. Per-joint scalars may
be given once and are broadcast; ``Q`` and ``Gamma`` take one entry per joint,
each either a diagonal or a full matrix. The README lists every key.
"""
import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .control import SaturatedPolicy, validate_gains
from .errors import ConfigError, GuidelineViolation
from .tde import validate_gbar

SINUSOID = {
    "plant": {
        "link_lengths": [0.3, 0.24, 0.34],
        "link_masses": [2.0, 1.5, 1.0],
        "viscous": [0.5, 0.5, 0.5],
        "armature": 0.02,
        "payload_mass": 0.0,
        "gravity": 9.81,
        "base": [0.0, 0.0],
    },
    "controller": {
        "beta": 0.1,
        "gbar": [40.0, 46.0, 54.0],
        "k1": 8.0,
        "k2": 8.0,
        "Q": [[300.0, 40000.0]] * 3,
        "c_bar": 200.0,
        "torque_clamp": None,
    },
    "critic": {
        "Gamma": [[100.0, 4.0, 0.1, 16.0]] * 3,
        "k_t": 0.2,
        "k_e": 0.01,
        "capacity": 10,
        "policy": "sigma_min",
    },
    "trajectory": {
        "kind": "sinusoid",
        "approach": 0.0,
        "segments": [
            {"duration": 5.0, "k_p": [0.3, 0.6, 1.0]},
            {"duration": 5.0, "k_p": [0.2, 0.5, 0.8]},
        ],
        "omega": 1.2566370614359172,
        "elbow": -1,
        "orientation": "radial",
        "phi": 0.0,
    },
    "run": {
        "dt": 0.001,
        "duration": 10.0,
        "seed": 0,
        "jitter": 0.0,
        "snapshot_period": 1000,
        "joint_order": None,
    },
    "validation": {
        "strict": True,
        "settle_time": 3.0,
        "error_threshold": 0.05,
        "weight_window": 0.5,
        "weight_tol": 1e-3,
        "inertia_samples": 2000,
        "circle_tolerance": 0.02,
    },
}

CIRCLES = copy.deepcopy(SINUSOID)
CIRCLES["plant"]["base"] = [0.02, 0.0]
CIRCLES["controller"].update({
    "beta": 1.0,
    "gbar": [14.0, 32.0, 80.0],
    "Q": [[16.0, 10.0], [18.0, 10.0], [0.2, 0.1]],
    "c_bar": 4.0,
})
CIRCLES["critic"].update({
    "Gamma": [[0.01] * 4, [0.03] * 4, [0.01] * 4],
    "k_t": 0.1,
    "k_e": 0.1,
})
CIRCLES["trajectory"].update({
    "kind": "circles",
    "segments": [
        {"duration": 10.0, "center": [0.68, 0.05], "radius": 0.2, "phase": 0.0},
        {"duration": 10.0, "center": [0.72, 0.05], "radius": 0.16, "phase": 0.0},
        {"duration": 10.0, "center": [0.75, 0.05], "radius": 0.12, "phase": 0.0},
    ],
})
CIRCLES["trajectory"]["approach"] = 2.0
CIRCLES["run"]["duration"] = 32.0

PRESETS = {"sinusoid": SINUSOID, "circles": CIRCLES}
PRESET_NOTES = {
    "sinusoid": "joint-space sinusoid with a gain switch at t=5 s (beta=0.1, Q=diag(300,40000))",
    "circles": "three task-space circles through IK (beta=1, per-joint Q and Gamma)",
}

SEGMENT_KEYS = {"duration", "k_p", "center", "radius", "phase", "q"}


def preset(name):
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


def _merge(base, update, path=""):
    """Recursive merge where every key in ``update`` must already exist in ``base``."""
    if not isinstance(update, dict):
        raise ConfigError(f"section {path or '<root>'} must be a mapping")
    for k, v in update.items():
        where = f"{path}.{k}" if path else str(k)
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, where)
        else:
            base[k] = v
    return base


def parse_override(text):
    """``"a.b.0=value"`` -> (["a", "b", 0], parsed value)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".")]
    if not all(parts):
        raise ConfigError(f"malformed override key {key!r}")
    path = [int(p) if p.lstrip("-").isdigit() else p for p in parts]
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    return path, value


def apply_override(cfg, text):
    path, value = parse_override(text)
    node = cfg
    for i, p in enumerate(path):
        last = i == len(path) - 1
        where = ".".join(map(str, path[: i + 1]))
        if isinstance(node, dict):
            if p not in node:
                raise ConfigError(f"unknown config key {where!r}")
        elif isinstance(node, list):
            if not isinstance(p, int) or not -len(node) <= p < len(node):
                raise ConfigError(f"index {where!r} is out of range")
        else:
            raise ConfigError(f"{where!r} does not name a section or list")
        if last:
            node[p] = value
        else:
            node = node[p]
    return cfg


def load_config(path=None, preset_name=None, overrides=()):
    """Start from a preset (default ``sinusoid``), merge a YAML file, then apply overrides."""
    cfg = preset(preset_name or "sinusoid")
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
        data = dict(data)
        base = data.pop("preset", None)
        if base is not None and preset_name is None:
            cfg = preset(base)
        _merge(cfg, data)
    for ov in overrides:
        apply_override(cfg, ov)
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dump_yaml(cfg):
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)


def _per_joint(value, n, name, cast=float):
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise ConfigError(f"{name} needs {n} entries, got {len(value)}")
        return [cast(v) for v in value]
    if value is None:
        raise ConfigError(f"{name} must be set")
    return [cast(value)] * n


def _matrix_list(value, n, dim, name):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ConfigError(f"{name} needs one entry per joint ({n})")
    out = []
    for i, v in enumerate(value):
        a = np.asarray(v, dtype=float)
        if a.shape == (dim,):
            a = np.diag(a)
        if a.shape != (dim, dim):
            raise ConfigError(f"{name}[{i}] must be a {dim}-vector diagonal or a {dim}x{dim} matrix")
        out.append(a)
    return out


@dataclass
class JointParams:
    gbar: float
    k1: float
    k2: float
    Q: np.ndarray
    c_bar: float
    Gamma: np.ndarray
    k_t: float
    k_e: float
    capacity: int


@dataclass
class ExperimentConfig:
    """Typed view of a resolved config mapping."""

    raw: dict
    n: int
    plant: dict
    joints: list
    beta: float
    torque_clamp: object
    buffer_policy: str
    trajectory: dict
    dt: float
    duration: float
    seed: int
    jitter: float
    snapshot_period: int
    joint_order: list
    validation: dict = field(default_factory=dict)

    @property
    def policy(self):
        return SaturatedPolicy(self.beta, self.joints[0].c_bar)

    def policy_for(self, i):
        return SaturatedPolicy(self.beta, self.joints[i].c_bar)


def resolve(cfg):
    """Check structure and types; returns an ``ExperimentConfig``."""
    try:
        p = cfg["plant"]
        n = len(p["link_lengths"])
        c, k, tr, run = cfg["controller"], cfg["critic"], cfg["trajectory"], cfg["run"]
        if n < 1:
            raise ConfigError("plant.link_lengths must be non-empty")
        gbar = _per_joint(c["gbar"], n, "controller.gbar")
        k1 = _per_joint(c["k1"], n, "controller.k1")
        k2 = _per_joint(c["k2"], n, "controller.k2")
        cbar = _per_joint(c["c_bar"], n, "controller.c_bar")
        Qs = _matrix_list(c["Q"], n, 2, "controller.Q")
        Gs = _matrix_list(k["Gamma"], n, 4, "critic.Gamma")
        kt = _per_joint(k["k_t"], n, "critic.k_t")
        ke = _per_joint(k["k_e"], n, "critic.k_e")
        cap = _per_joint(k["capacity"], n, "critic.capacity", int)
        joints = [JointParams(gbar[i], k1[i], k2[i], Qs[i], cbar[i], Gs[i], kt[i], ke[i], cap[i])
                  for i in range(n)]
        if k["policy"] not in ("sigma_min", "fifo"):
            raise ConfigError(f"critic.policy must be 'sigma_min' or 'fifo', got {k['policy']!r}")
        if tr["kind"] not in ("sinusoid", "circles", "setpoint"):
            raise ConfigError(f"trajectory.kind {tr['kind']!r} is not one of sinusoid, circles, setpoint")
        for i, seg in enumerate(tr["segments"]):
            extra = set(seg) - SEGMENT_KEYS
            if extra:
                raise ConfigError(f"unknown key(s) {sorted(extra)} in trajectory.segments[{i}]")
        order = run["joint_order"]
        order = list(range(n)) if order is None else [int(j) for j in order]
        if sorted(order) != list(range(n)):
            raise ConfigError(f"run.joint_order must be a permutation of 0..{n - 1}")
        dt = float(run["dt"])
        duration = float(run["duration"])
        if not (dt > 0 and math.isfinite(dt)):
            raise ConfigError("run.dt must be positive")
        if not duration >= 0:
            raise ConfigError("run.duration must be non-negative")
        beta = float(c["beta"])
        if not beta > 0:
            raise ConfigError("controller.beta must be positive")
        clamp = c["torque_clamp"]
        return ExperimentConfig(
            raw=cfg, n=n, plant=dict(p), joints=joints, beta=beta,
            torque_clamp=None if clamp is None else float(clamp),
            buffer_policy=k["policy"], trajectory=tr, dt=dt, duration=duration,
            seed=int(run["seed"]), jitter=float(run["jitter"]),
            snapshot_period=int(run["snapshot_period"]), joint_order=order,
            validation=dict(cfg["validation"]))
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config value: {exc}") from None


@dataclass
class Check:
    name: str
    passed: bool
    message: str


def validate(exp, plant=None):
    """Run the design guidelines. Returns a list of ``Check``; never raises."""
    checks = []
    for i, jp in enumerate(exp.joints):
        rep = validate_gains(jp.k1, jp.k2)
        ev = ", ".join(f"{e.real:.3g}{e.imag:+.3g}j" for e in rep.eigenvalues)
        msg = (f"k1={jp.k1:g}, k2={jp.k2:g}; eig(A)=[{ev}]" if rep.passed else
               f"joint {i + 1}: gain guideline k1 > 1 and k2 > 1/2 violated ({rep.message})")
        checks.append(Check(f"gains[{i}]", rep.passed, msg))
        for name, M in (("Q", jp.Q), ("Gamma", jp.Gamma)):
            ok = bool(np.allclose(M, M.T) and np.all(np.linalg.eigvalsh((M + M.T) / 2) > 0))
            checks.append(Check(f"{name}[{i}]", ok, "symmetric positive definite" if ok
                                else f"joint {i + 1}: {name} must be symmetric positive definite"))
    if plant is not None:
        from .plant import inertia_bounds
        _, _, d_lo, _ = inertia_bounds(plant, samples=int(exp.validation.get("inertia_samples", 2000)))
        for i, jp in enumerate(exp.joints):
            ok, margin = validate_gbar(jp.gbar, d_lo[i])
            need = 1.0 / (2.0 * d_lo[i])
            msg = (f"gbar={jp.gbar:g} > 1/(2 m_lower)={need:.4g}" if ok else
                   f"joint {i + 1}: gbar guideline violated, gbar={jp.gbar:g} must exceed 1/(2 m_lower)={need:.4g}")
            checks.append(Check(f"gbar[{i}]", bool(ok), msg))
    return checks


def enforce(checks, strict=True, warn=None):
    """Raise ``GuidelineViolation`` on failures in strict mode, otherwise warn."""
    failed = [c for c in checks if not c.passed]
    if failed and strict:
        raise GuidelineViolation("; ".join(c.message for c in failed))
    if warn is not None:
        for c in failed:
            warn(f"warning: {c.message}")
    return failed
