"""Closed-loop experiment runner, trace persistence and offline replay.

Each tick reads one measurement snapshot ``(q, qdot)`` and then, per joint:
delay-line estimate, tracking error, feedforward inversion, saturated policy,
torque, LIP regressand, buffer admission and one critic weight step. The
plant is then advanced with explicit Euler. Joints share no mutable state, so
the processing order does not affect the result.
"""
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .config import ExperimentConfig, dump_yaml, config_hash, resolve
from .control import ErrorSubsystem, ReferencePoint, SaturatedPolicy, assemble_torque, feedforward, policy
from .critic import FEATURES, CriticState, ExperienceBuffer, grad_phi_w, make_regressand, weight_step
from .errors import DivergenceError, NonFiniteMeasurementError, TraceParseError
from .plant import DiffEstimator, PlanarArm, PlantState, euler_step, numeric_derivative
from .tde import TdeChannel, TdeErrorMonitor, estimate_h, true_h
from .trajectory import Blend, Circle, Segment, Setpoint, Sinusoid, TrajectoryProgram

TRACE_VERSION = "iadp-trace-1"


def build_plant(exp):
    p = exp.plant
    return PlanarArm(link_lengths=p["link_lengths"], link_masses=p["link_masses"],
                     viscous=p["viscous"], payload_mass=p["payload_mass"], armature=p["armature"],
                     gravity=p["gravity"], base=p["base"])


def build_program(exp):
    """Segments from the config; ``trajectory.approach > 0`` prepends a quintic
    transfer from rest at the origin to the first segment's initial state."""
    tr = exp.trajectory
    segs = []
    t0 = float(tr.get("approach", 0.0) or 0.0)
    for s in tr["segments"]:
        if tr["kind"] == "sinusoid":
            gen = Sinusoid(s["k_p"])
        elif tr["kind"] == "setpoint":
            gen = Setpoint(s["q"])
        else:
            gen = Circle(s["center"], s["radius"], tr["omega"], exp.plant["link_lengths"],
                         phase=s.get("phase", 0.0), base=exp.plant["base"], elbow=tr["elbow"],
                         orientation=tr["orientation"], phi=tr["phi"])
        segs.append(Segment(float(s["duration"]), gen))
    if t0 > 0:
        zero = np.zeros(exp.n)
        segs.insert(0, Segment(t0, Blend((zero, zero, zero), segs[0].generator(t0, 0.0), t0)))
    return TrajectoryProgram(segs)


def column_names(n):
    j = range(1, n + 1)
    cols = ["t", "segment"]
    for name in ("q", "qdot", "qd"):
        cols += [f"{name}_{i}" for i in j]
    cols += [f"e_{i}1" for i in j] + [f"e_{i}2" for i in j]
    for name in ("u", "du_f", "du_b", "xi"):
        cols += [f"{name}_{i}" for i in j]
    cols += [f"What_{i}_{m}" for i in j for m in range(1, 5)]
    for name in ("theta_tilde", "rank", "sigma_min"):
        cols += [f"{name}_{i}" for i in j]
    return cols + ["ee_x", "ee_y", "ref_x", "ref_y"]


class JointLoop:
    """Controller, delay line and learner of one joint."""

    def __init__(self, jp, beta, dt, buffer_policy="sigma_min", clamp=None):
        self.sub = ErrorSubsystem(jp.k1, jp.k2, jp.gbar)
        self.pol = SaturatedPolicy(beta, jp.c_bar)
        self.Q = jp.Q
        self.dt = dt
        self.clamp = clamp
        self.channel = TdeChannel(jp.gbar, dt)
        self.critic = CriticState(None, jp.Gamma, jp.k_t, jp.k_e)
        self.buffer = ExperienceBuffer(jp.capacity, policy=buffer_policy)
        self.monitor = TdeErrorMonitor()
        self.u = 0.0

    def control(self, e1, e2, qd_ddot, warm):
        """One controller and learner update on a fixed snapshot; returns the log tuple."""
        e = (e1, e2)
        xdot2_0 = 0.0 if warm else self.channel.xdot2_0
        du_f = feedforward(self.sub, ReferencePoint(0.0, 0.0, qd_ddot), e, xdot2_0)
        du_b = policy(self.pol, self.sub, grad_phi_w(e, self.critic.W_hat))
        u = assemble_torque(self.u, du_f, du_b, self.clamp)
        reg = make_regressand(FEATURES, self.sub, self.pol, self.Q, e, du_b)
        tt = self.critic.theta_tilde(reg)
        if not warm:
            self.buffer.admit(reg)
        weight_step(self.critic, reg, self.buffer, self.dt)
        rank, smin = self.buffer.rank_report()
        self.u = u
        return u, du_f, du_b, tt, rank, smin


@dataclass
class RunResult:
    columns: list
    rows: list
    header: dict
    snapshots: list
    monitors: list
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0

    def array(self, name):
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def as_dict(self):
        data = np.array(self.rows, dtype=float).reshape(len(self.rows), len(self.columns))
        return {c: data[:, k] for k, c in enumerate(self.columns)}


def trace_params(exp, program):
    """Parameters the metrics need, stored in the trace header."""
    segs = []
    for seg, start in zip(program.segments, program.starts):
        d = {"start": float(start), "duration": float(seg.duration), "kind": type(seg.generator).__name__.lower()}
        if isinstance(seg.generator, Circle):
            d["center"] = [float(v) for v in seg.generator.center]
            d["radius"] = float(seg.generator.radius)
        segs.append(d)
    v = exp.validation
    return {"n": exp.n, "dt": exp.dt, "duration": exp.duration, "beta": exp.beta,
            "c_bar": [jp.c_bar for jp in exp.joints], "segments": segs,
            "settle_time": float(v["settle_time"]), "error_threshold": float(v["error_threshold"]),
            "weight_window": float(v["weight_window"]), "weight_tol": float(v["weight_tol"]),
            "circle_tolerance": float(v["circle_tolerance"])}


def run_experiment(cfg, outdir=None, overrides=(), plant=None, oracle=False, progress=None):
    """Run the closed loop described by ``cfg`` (mapping or ``ExperimentConfig``).

    ``plant`` replaces the configured arm (any ``PlantModel`` with matching
    joint count). ``oracle=True`` records simulator-side truth into each
    joint's ``TdeErrorMonitor`` so the error bound can be fitted afterwards.
    Writes ``trace.csv``, ``metrics.json``, ``buffers.json`` and
    ``config.resolved.yaml`` when ``outdir`` is given.
    """
    from .metrics import compute_metrics

    exp = cfg if isinstance(cfg, ExperimentConfig) else resolve(cfg)
    plant = build_plant(exp) if plant is None else plant
    if plant.n != exp.n:
        raise ValueError(f"plant has {plant.n} joints but the config describes {exp.n}")
    program = build_program(exp)
    dt, n = exp.dt, exp.n
    nsteps = int(round(exp.duration / dt))
    joints = [JointLoop(jp, exp.beta, dt, exp.buffer_policy, exp.torque_clamp) for jp in exp.joints]
    diff = DiffEstimator(dt)

    q0 = np.zeros(n)
    if exp.jitter > 0:
        q0 = q0 + np.random.default_rng(exp.seed).normal(0.0, exp.jitter, n)
    state = PlantState(0.0, q0, np.zeros(n))
    has_fk = hasattr(plant, "fk")
    gbar = np.array([jp.gbar for jp in exp.joints])

    header = {"format": TRACE_VERSION, "backend": _backend.name(), "config_hash": config_hash(exp.raw),
              "overrides": list(overrides), "params": trace_params(exp, program)}
    rows, snapshots = [], []
    period = exp.snapshot_period
    t0 = time.perf_counter()
    k = 0
    try:
        for k in range(nsteps):
            t = k * dt
            q, qdot = state.q, state.qdot
            if not state.is_finite():
                raise NonFiniteMeasurementError("non-finite joint measurement")
            qdd_meas = numeric_derivative(diff, qdot)
            ref = program.sample(t)
            e1 = q - ref.q_d
            e2 = qdot - ref.qd_dot
            warm = k == 0
            if not warm:
                for i, jl in enumerate(joints):
                    jl.channel.push(qdd_meas[i], jl.u)
            if k == 0 or (period > 0 and k % period == 0):
                snapshots.append({"tick": k, "t": t, "joints": [
                    {"W": jl.critic.W_hat.tolist(), "buffer": jl.buffer.to_dict()} for jl in joints]})
            out = [None] * n
            for i in exp.joint_order:
                out[i] = joints[i].control(float(e1[i]), float(e2[i]), float(ref.qd_ddot[i]), warm)
            u = np.array([o[0] for o in out])
            qdd = plant.accel(t, q, qdot, u)
            xi = np.array([true_h(gbar[i], qdd[i], u[i]) - estimate_h(joints[i].channel) for i in range(n)])
            for i, jl in enumerate(joints):
                if oracle:
                    _oracle_record(plant, jl, i, t, q, qdot, qdd, u, e1[i], e2[i], ref.qd_ddot[i], xi[i])
                else:
                    jl.monitor.observe(xi[i])
            if has_fk:
                ee = plant.fk(q)
                pt = ref.point if ref.point is not None else plant.fk(ref.q_d)
            else:
                ee = pt = (math.nan, math.nan)
            rows.append(_row(t, ref.segment, q, qdot, ref.q_d, e1, e2, out, xi, joints, ee, pt))
            state = euler_step(plant, state, u, dt, qdd=qdd)
            state = PlantState((k + 1) * dt, state.q, state.qdot)
            if progress is not None:
                progress(k, nsteps)
    except DivergenceError as exc:
        if exc.tick is None:
            exc.tick = k
        exc.dump.setdefault("t", k * dt)
        exc.dump.setdefault("q", state.q.tolist())
        exc.dump.setdefault("qdot", state.qdot.tolist())
        exc.dump.setdefault("W", [jl.critic.W_hat.tolist() for jl in joints])
        raise
    runtime = time.perf_counter() - t0

    res = RunResult(column_names(n), rows, header, snapshots, [jl.monitor for jl in joints], runtime=runtime)
    res.metrics = compute_metrics(header, res.as_dict())
    res.metrics["runtime_s"] = runtime
    res.metrics["backend"] = header["backend"]
    if outdir is not None:
        write_outputs(res, exp, outdir)
    return res


def _oracle_record(plant, jl, i, t, q, qdot, qdd, u, e1, e2, qd_ddot, xi):
    # per-joint split qdd_i = f_i + g_i u_i with g_i the diagonal of M^-1
    M = plant.inertia(q)
    g = float(np.linalg.inv(M)[i, i])
    f = float(qdd[i] - g * u[i])
    mu = float(qd_ddot - jl.sub.k1 * e1 - jl.sub.k2 * e2)
    jl.monitor.record(xi, g, f, mu, u[i])


def _row(t, seg, q, qdot, qd, e1, e2, out, xi, joints, ee, pt):
    row = [float(t), int(seg)]
    row += [float(v) for v in q] + [float(v) for v in qdot] + [float(v) for v in qd]
    row += [float(v) for v in e1] + [float(v) for v in e2]
    for col in range(3):
        row += [float(o[col]) for o in out]
    row += [float(v) for v in xi]
    for jl in joints:
        row += [float(w) for w in jl.critic.W_hat]
    row += [float(o[3]) for o in out] + [int(o[4]) for o in out] + [float(o[5]) for o in out]
    row += [float(ee[0]), float(ee[1]), float(pt[0]), float(pt[1])]
    return row


def write_trace(path, columns, rows, header):
    with open(path, "w", newline="\n") as fh:
        for key in ("format", "backend", "config_hash", "overrides", "params"):
            fh.write(f"# {key}: {json.dumps(header[key], sort_keys=True)}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(repr(v) for v in r) + "\n")


def read_trace(path):
    """Returns ``(header, columns)`` where columns maps name -> float array."""
    header = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise TraceParseError(f"cannot read trace {path}: {exc}") from None
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            try:
                header[key.strip()] = json.loads(val)
            except json.JSONDecodeError:
                raise TraceParseError(f"malformed header line {line!r}") from None
        elif line.strip():
            body.append(line)
    if not body:
        raise TraceParseError(f"trace {path} has no column row")
    names = body[0].split(",")
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in body[1:]], dtype=float)
    except ValueError as exc:
        raise TraceParseError(f"non-numeric value in trace {path}: {exc}") from None
    data = data.reshape(len(body) - 1, len(names))
    return header, {c: data[:, k] for k, c in enumerate(names)}


def write_outputs(res, exp, outdir):
    os.makedirs(outdir, exist_ok=True)
    write_trace(os.path.join(outdir, "trace.csv"), res.columns, res.rows, res.header)
    with open(os.path.join(outdir, "buffers.json"), "w") as fh:
        json.dump({"format": TRACE_VERSION, "snapshots": res.snapshots}, fh)
    with open(os.path.join(outdir, "metrics.json"), "w") as fh:
        json.dump(res.metrics, fh, indent=2, sort_keys=True)
    with open(os.path.join(outdir, "config.resolved.yaml"), "w") as fh:
        fh.write(dump_yaml(exp.raw))


@dataclass
class ReplayReport:
    start_tick: int
    ticks: int
    weights: np.ndarray  # (ticks, n, 4)
    logged: np.ndarray
    max_abs_diff: float
    identical: bool


def replay(cfg, header, trace, snapshot, k_t=None, k_e=None, freeze_buffer=False, end_tick=None):
    """Re-run the critic updates offline from logged errors and policy outputs.

    Starting from ``snapshot`` (weights and buffers before that tick's update),
    every tick recomputes ``(Theta, Y)`` from the logged ``e`` and ``du_b``,
    admits into the buffer unless frozen, and applies one weight step.
    """
    exp = cfg if isinstance(cfg, ExperimentConfig) else resolve(cfg)
    n = exp.n
    need = [f"e_{i}1" for i in range(1, n + 1)] + [f"du_b_{i}" for i in range(1, n + 1)]
    missing = [c for c in need if c not in trace]
    if missing:
        raise TraceParseError(f"trace lacks columns {missing}")
    if len(snapshot["joints"]) != n:
        raise TraceParseError("snapshot joint count does not match the config")
    start = int(snapshot["tick"])
    total = len(trace["t"])
    end = total if end_tick is None else min(int(end_tick), total)
    loops = []
    for jp, js in zip(exp.joints, snapshot["joints"]):
        crit = CriticState(js["W"], jp.Gamma, jp.k_t, jp.k_e)
        buf = ExperienceBuffer.from_dict(js["buffer"])
        loops.append((ErrorSubsystem(jp.k1, jp.k2, jp.gbar), SaturatedPolicy(exp.beta, jp.c_bar), jp.Q, crit, buf))
    W = np.empty((max(end - start, 0), n, 4))
    for k in range(start, end):
        for i, (sub, pol, Q, crit, buf) in enumerate(loops):
            e = (float(trace[f"e_{i + 1}1"][k]), float(trace[f"e_{i + 1}2"][k]))
            reg = make_regressand(FEATURES, sub, pol, Q, e, float(trace[f"du_b_{i + 1}"][k]))
            if k > 0 and not freeze_buffer:
                buf.admit(reg)
            weight_step(crit, reg, buf, exp.dt, k_t=k_t, k_e=k_e)
            W[k - start, i] = crit.W_hat
    logged = np.empty_like(W)
    for i in range(n):
        for m in range(4):
            col = trace.get(f"What_{i + 1}_{m + 1}")
            if col is None:
                raise TraceParseError(f"trace lacks column What_{i + 1}_{m + 1}")
            logged[:, i, m] = col[start:end]
    diff = float(np.max(np.abs(W - logged))) if W.size else 0.0
    return ReplayReport(start, end - start, W, logged, diff, bool(np.array_equal(W, logged)))


def load_run(rundir):
    """Load ``(config mapping, header, trace columns, snapshots)`` from a run directory."""
    import yaml

    try:
        with open(os.path.join(rundir, "config.resolved.yaml")) as fh:
            cfg = yaml.safe_load(fh)
        with open(os.path.join(rundir, "buffers.json")) as fh:
            snaps = json.load(fh)["snapshots"]
    except (OSError, KeyError, ValueError) as exc:
        raise TraceParseError(f"run directory {rundir} is incomplete: {exc}") from None
    header, trace = read_trace(os.path.join(rundir, "trace.csv"))
    return cfg, header, trace, snaps
