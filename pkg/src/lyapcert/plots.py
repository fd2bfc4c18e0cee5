"""Static diagnostic plots for certification runs (2-D systems)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def emit_plots(cert, trajectories, rate, out_dir, f=None, v=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    made = []
    try:
        made.append(_phase_portrait(cert, trajectories, out_dir, v))
        made.append(_v_envelope(cert, trajectories, out_dir))
        p = _vdot_trapezoid(cert, trajectories, rate, out_dir)
        if p is not None:
            made.append(p)
    except Exception as exc:  # backend trouble must not sink the pipeline
        print(f"warning: plotting failed ({exc}); continuing")
    return made


def _phase_portrait(cert, trajectories, out_dir, v):
    fig, ax = plt.subplots(figsize=(6, 6))
    if cert.dimension == 2 and v is not None:
        lim = 1.1 * math.sqrt(cert.region.c2 / (v.quadratic_lower_k0 or 1.0))
        xs = np.linspace(-lim, lim, 400)
        X, Y = np.meshgrid(xs, xs)
        Z = v.evaluate_many(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
        ax.contour(
            X, Y, Z,
            levels=[cert.region.c1, cert.attractor_level, cert.region.c2],
            colors=["gray", "green", "black"], linewidths=0.8,
        )
        if cert.badset is not None and cert.badset.components:
            pts = np.vstack(
                [cert.badset.component_centers(c) for c in cert.badset.components]
            )
            ax.plot(pts[:, 0], pts[:, 1], ".", color="red", ms=2, label="bad cells")
    for traj in trajectories:
        if traj.states.shape[1] == 2:
            ax.plot(traj.states[:, 0], traj.states[:, 1], lw=0.6)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title("phase portrait with region shells")
    ax.set_aspect("equal")
    path = out_dir / "phase_portrait.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _v_envelope(cert, trajectories, out_dir):
    fig, ax = plt.subplots(figsize=(7, 4))
    for traj in trajectories:
        ax.plot(traj.times, traj.V_values, lw=0.6, color="steelblue", alpha=0.6)
    if trajectories:
        t_max = max(float(t.times[-1]) for t in trajectories)
        v0 = max(float(t.V_values[0]) for t in trajectories)
        ts = np.linspace(0.0, t_max, 400)
        ax.plot(ts, cert.envelope(v0, ts), "r--", lw=1.2, label="decay envelope")
        ax.axhline(v0 + cert.overshoot_margin, color="orange", lw=0.8,
                   label="overshoot bound")
        ax.axhline(cert.attractor_level, color="green", lw=0.8,
                   label="attractor level")
    ax.set_xlabel("t")
    ax.set_ylabel("V")
    ax.set_title("V along trajectories vs certified envelope")
    ax.legend(loc="upper right", fontsize=8)
    path = out_dir / "v_envelope.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _vdot_trapezoid(cert, trajectories, rate, out_dir):
    """Vdot across one bad-set pass against the trapezoid bound
    min{b, alpha*L0_sup*(tau - s) - eta*a*c1, ...}; skipped (with a note)
    when no trajectory visits the bad set."""
    interval = None
    chosen = None
    for traj in trajectories:
        for iv in traj.X_eta_intervals:
            if not iv["clipped_start"] and not iv["clipped_end"]:
                interval, chosen = iv, traj
                break
        if interval:
            break
    if interval is None:
        (out_dir / "vdot_trapezoid.SKIPPED.txt").write_text(
            "no bad-set visit occurred; trapezoid plot skipped\n"
        )
        print("note: no bad-set pass; Vdot trapezoid plot skipped")
        return None

    i, j = interval["sample_range"]
    pad = max(2, (j - i) // 2)
    lo, hi = max(0, i - pad), min(len(chosen.times) - 1, j + pad)
    ts = chosen.times[lo : hi + 1]
    vd = chosen.Vdot_values[lo : hi + 1]
    s = interval["start"]
    aL = cert.alpha * cert.constants.L0_sup
    drive = cert.eta * cert.rate_a * cert.region.c1
    tau = ts - s
    bound = np.minimum(
        cert.constants.b,
        np.minimum(aL * tau - drive, aL * (interval["end"] - s - tau) - drive),
    )

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ts, vd, lw=1.0, label="Vdot")
    ax.plot(ts, bound, "r--", lw=1.0, label="trapezoid bound")
    ax.axvspan(interval["start"], interval["end"], color="red", alpha=0.1)
    ax.set_xlabel("t")
    ax.set_ylabel("dV/dt")
    ax.set_title("Vdot across a bad-set pass")
    ax.legend(fontsize=8)
    path = out_dir / "vdot_trapezoid.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
