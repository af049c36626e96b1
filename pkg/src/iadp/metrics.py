"""Run metrics computed from a trace alone (header params plus columns)."""
import math

import numpy as np

from .errors import TraceParseError


def rms(x):
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x))) if x.size else None


def settling_time(t, W, window, tol):
    """First time after which ``||W(t) - W(t - window)|| < tol`` holds to the end.

    ``W`` has shape ``(ticks, m)``. Returns None if the trace is shorter than
    one window or the condition is violated at the last sample.
    """
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        return None
    dt = float(t[1] - t[0])
    lag = int(round(window / dt))
    if lag < 1 or len(t) <= lag:
        return None
    d = np.linalg.norm(W[lag:] - W[:-lag], axis=1)
    bad = np.nonzero(~(d < tol))[0]
    if bad.size == 0:
        return float(t[lag])
    last = bad[-1] + lag
    return float(t[last + 1]) if last + 1 < len(t) else None


def _none_if_nan(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def compute_metrics(header, cols):
    """Deterministic ``RunMetrics`` mapping from a parsed trace."""
    try:
        p = header["params"]
        n = int(p["n"])
    except (KeyError, TypeError):
        raise TraceParseError("trace header lacks the params record") from None
    needed = ["t", "segment"] + [f"e_{i}1" for i in range(1, n + 1)]
    missing = [c for c in needed if c not in cols]
    if missing:
        raise TraceParseError(f"trace lacks columns {missing}")
    t = np.asarray(cols["t"], dtype=float)
    joints = range(1, n + 1)
    out = {"ticks": int(len(t)), "t_end": float(t[-1]) if len(t) else None}
    if len(t) == 0:
        for key in ("rms_e1", "max_settled_e1", "settled_ok", "weight_settling_time",
                    "weight_settling_time_per_joint", "xi_max", "xi_rms", "diag_fraction",
                    "circle_error", "circle_point_error", "circle_ok"):
            out[key] = None
        return out

    settle = float(p["settle_time"])
    thr = float(p["error_threshold"])
    seg = np.asarray(cols["segment"]).astype(int)
    starts = np.array([s["start"] for s in p["segments"]], dtype=float)
    since = t - starts[np.clip(seg, 0, len(starts) - 1)]
    # 1e-9 slack so a tick exactly at start + settle counts as settled
    settled = since >= settle - 1e-9

    out["rms_e1"] = [[rms(cols[f"e_{i}1"][(seg == s) & settled]) for s in range(len(starts))]
                     for i in joints]
    out["max_settled_e1"] = [float(np.max(np.abs(cols[f"e_{i}1"][settled]))) if settled.any() else None
                             for i in joints]
    out["settled_ok"] = (all(m is not None and m < thr for m in out["max_settled_e1"])
                         if settled.any() else None)

    wcols = [[f"What_{i}_{m}" for m in range(1, 5)] for i in joints]
    if all(c in cols for wc in wcols for c in wc):
        per = [settling_time(t, np.column_stack([cols[c] for c in wc]), p["weight_window"], p["weight_tol"])
               for wc in wcols]
        out["weight_settling_time_per_joint"] = per
        out["weight_settling_time"] = None if any(v is None for v in per) else max(per)
    else:
        out["weight_settling_time_per_joint"] = out["weight_settling_time"] = None

    if all(f"xi_{i}" in cols for i in joints):
        xs = [np.asarray(cols[f"xi_{i}"]) for i in joints]
        # the warm-up tick has no delayed sample and is excluded
        out["xi_max"] = [float(np.max(np.abs(x[1:]))) if len(x) > 1 else None for x in xs]
        out["xi_rms"] = [rms(x[1:]) if len(x) > 1 else None for x in xs]
        if all(f"du_b_{i}" in cols for i in joints):
            frac = []
            for i, x in zip(joints, xs):
                xbar = np.maximum.accumulate(np.abs(x[1:])) if len(x) > 1 else np.array([])
                hit = p["c_bar"][i - 1] * np.abs(cols[f"du_b_{i}"][1:]) > xbar
                frac.append(float(np.mean(hit)) if hit.size else None)
            out["diag_fraction"] = frac
        else:
            out["diag_fraction"] = None
    else:
        out["xi_max"] = out["xi_rms"] = out["diag_fraction"] = None

    circ = [s for s in p["segments"] if "center" in s]
    if circ and all(c in cols for c in ("ee_x", "ee_y", "ref_x", "ref_y")):
        ce, pe = [], []
        for s_idx, s in enumerate(p["segments"]):
            if "center" not in s:
                continue
            m = (seg == s_idx) & settled
            if not m.any():
                ce.append(None)
                pe.append(None)
                continue
            dx = cols["ee_x"][m] - s["center"][0]
            dy = cols["ee_y"][m] - s["center"][1]
            ce.append(float(np.max(np.abs(np.hypot(dx, dy) - s["radius"]))))
            pe.append(float(np.max(np.hypot(cols["ee_x"][m] - cols["ref_x"][m], cols["ee_y"][m] - cols["ref_y"][m]))))
        out["circle_error"] = ce
        out["circle_point_error"] = pe
        tol = float(p["circle_tolerance"])
        out["circle_ok"] = all(v is not None and v < tol for v in ce)
    else:
        out["circle_error"] = out["circle_point_error"] = out["circle_ok"] = None
    return out


def summary_rows(metrics):
    """Flatten metrics into ``(name, value)`` rows for an aligned table."""
    rows = []

    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, bool):
            return "yes" if v else "no"
        if isinstance(v, float):
            return f"{v:.4g}"
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return str(v)

    for key in sorted(metrics):
        rows.append((key, fmt(_none_if_nan(metrics[key]))))
    return rows


def format_table(metrics):
    rows = summary_rows(metrics)
    if not rows:
        return ""
    w = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(w)}  {v}" for k, v in rows)
