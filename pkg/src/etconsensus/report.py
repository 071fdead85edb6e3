"""Static SVG charts and a markdown summary rendered from a trace file."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DimensionMismatchError
from .sim import load_trace_times_and_states


def _time_axis(n_steps: int, T_k: float) -> np.ndarray:
    return np.arange(n_steps) * T_k


def render_report(trace_path, out_dir, T_k: float = 1.0) -> dict:
    """Render the four standard charts; returns paths and summary facts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = load_trace_times_and_states(trace_path)
    x = data["x"]
    if x.shape[0] < 1:
        raise DimensionMismatchError("trace has no time steps")
    n_agents = data["n_agents"]
    n = x.shape[2]
    t = _time_axis(x.shape[0], T_k)

    paths = {}

    fig, axes = plt.subplots(n, 1, figsize=(7, 2.6 * n), sharex=True, squeeze=False)
    for k in range(n):
        ax = axes[k, 0]
        for i in range(n_agents):
            label = "leader" if i == 0 else f"follower {i}"
            style = dict(lw=1.8, ls="--") if i == 0 else dict(lw=1.0)
            ax.plot(t, x[:, i, k], label=label, **style)
        ax.set_ylabel(f"state {k + 1}")
        ax.grid(alpha=0.3)
    axes[0, 0].legend(loc="best", fontsize=8)
    axes[-1, 0].set_xlabel("time [s]" if T_k != 1.0 else "step")
    fig.suptitle("Agent state trajectories")
    paths["states"] = out_dir / "states.svg"
    fig.savefig(paths["states"], format="svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 3.2))
    eta_times = sorted(data["eta"].keys())
    for i in range(n_agents):
        series = [data["eta"][tt].get(i, np.nan) for tt in eta_times]
        ax.plot(np.asarray(eta_times) * T_k, series, lw=1.0,
                label="leader" if i == 0 else f"follower {i}")
    ax.set_xlabel("time [s]" if T_k != 1.0 else "step")
    ax.set_ylabel("eta")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("Trigger dynamic variables")
    paths["eta"] = out_dir / "eta.svg"
    fig.savefig(paths["eta"], format="svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 2.8))
    bc = [b for b in data["broadcasts"] if b[0] > 0]
    for (tt, i) in bc:
        ax.vlines(tt * T_k, i - 0.35, i + 0.35, lw=1.2)
    ax.set_yticks(range(n_agents))
    ax.set_yticklabels(["leader"] + [f"follower {i}" for i in range(1, n_agents)])
    ax.set_ylim(-0.6, n_agents - 0.4)
    ax.set_xlabel("time [s]" if T_k != 1.0 else "step")
    ax.grid(alpha=0.3, axis="x")
    ax.set_title("Broadcast instants")
    paths["broadcasts"] = out_dir / "broadcasts.svg"
    fig.savefig(paths["broadcasts"], format="svg")
    plt.close(fig)

    err = np.linalg.norm(x[:, 1:, :] - x[:, :1, :], axis=2).max(axis=1) \
        if n_agents > 1 else np.zeros(x.shape[0])
    fig, ax = plt.subplots(figsize=(7, 3.0))
    ax.plot(t, err, lw=1.2)
    ax.set_xlabel("time [s]" if T_k != 1.0 else "step")
    ax.set_ylabel("max follower error")
    ax.grid(alpha=0.3)
    ax.set_title("Consensus error")
    paths["error"] = out_dir / "consensus_error.svg"
    fig.savefig(paths["error"], format="svg")
    plt.close(fig)

    counts = [0] * n_agents
    for (tt, i) in bc:
        counts[i] += 1
    summary = {
        "steps": int(x.shape[0] - 1),
        "agents": n_agents,
        "initial_error": float(err[0]),
        "final_error": float(err[-1]),
        "broadcast_counts": counts,
    }
    md = out_dir / "summary.md"
    with open(md, "w") as fh:
        fh.write("# Run summary\n\n")
        fh.write(f"- steps: {summary['steps']}\n")
        fh.write(f"- agents: {summary['agents']}\n")
        fh.write(f"- initial max error: {summary['initial_error']:.6g}\n")
        fh.write(f"- final max error: {summary['final_error']:.6g}\n")
        ratio = summary["final_error"] / summary["initial_error"] if summary["initial_error"] else float("nan")
        fh.write(f"- error ratio: {ratio:.4g}\n")
        fh.write(f"- broadcasts per agent (post-initialization): {counts}\n\n")
        for name, p in paths.items():
            fh.write(f"![{name}]({p.name})\n")
    paths["summary"] = md
    summary["paths"] = {k: str(v) for k, v in paths.items()}
    return summary
