"""Run reports: machine-readable key/value text plus rendered figures.

The text report echoes the full configuration (it re-parses to an equal
``RunConfig``), the resolved physical constants, one line per sweep of the
bound history, and one block per verification check.  Figures are rendered
with the Agg backend next to the delimited output; all report content is
deterministic when the run is (wallclock is zeroed in deterministic mode).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import grid as g_
from .config import RunConfig
from .saddle import CheckResult, SaddleState, _cell_center_values


def _kv(key: str, value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return f"{key} = {'true' if value else 'false'}"
    if isinstance(value, (float, np.floating)):
        return f"{key} = {float(value)!r}"
    if isinstance(value, np.integer):
        return f"{key} = {int(value)}"
    return f"{key} = {value}"


def write_run_report(path, cfg: RunConfig, state: SaddleState,
                     checks: list[CheckResult], resolved: dict,
                     deterministic: bool, wallclock: float = 0.0) -> None:
    lines = ["report.schema = 1"]
    for line in cfg.to_text().strip().split("\n"):
        lines.append("config." + line)
    for key in sorted(resolved):
        lines.append(_kv(f"resolved.{key}", resolved[key]))
    lines.append(_kv("run.converged", state.converged))
    lines.append(_kv("run.sweeps", state.sweeps))
    lines.append(_kv("run.lower", state.lower))
    lines.append(_kv("run.lower_relaxed", state.lower_relaxed))
    lines.append(_kv("run.upper", state.upper))
    lines.append(_kv("run.gap", state.gap))
    lines.append(_kv("run.gap_certified", state.gap_certified))
    lines.append(_kv("run.multiplier", state.multiplier))
    lines.append(_kv("run.gap_monotone_last10", state.gap_monotone_last10))
    lines.append(_kv("run.wallclock", 0.0 if deterministic else wallclock))
    for h in state.history:
        k = h["sweep"]
        for field in ("lower", "upper", "gap", "best_gap", "lower_relaxed",
                      "gap_certified", "u_norm", "volume", "theta", "multiplier",
                      "inner_iterations", "outer_iterations", "outer_converged"):
            lines.append(_kv(f"iter.{k}.{field}", h[field]))
    for c in checks:
        lines.append(_kv(f"check.{c.name}.measured", c.measured))
        lines.append(_kv(f"check.{c.name}.bound", c.bound))
        lines.append(_kv(f"check.{c.name}.passed", c.passed))
        if c.note:
            lines.append(f"check.{c.name}.note = {c.note}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_verify_report(path, cfg: RunConfig, checks: list[CheckResult]) -> None:
    lines = ["report.schema = 1"]
    for line in cfg.to_text().strip().split("\n"):
        lines.append("config." + line)
    for c in checks:
        lines.append(_kv(f"check.{c.name}.measured", c.measured))
        lines.append(_kv(f"check.{c.name}.bound", c.bound))
        lines.append(_kv(f"check.{c.name}.passed", c.passed))
        if c.note:
            lines.append(f"check.{c.name}.note = {c.note}")
    lines.append(_kv("verify.all_passed", all(c.passed for c in checks)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_report(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            key, _, value = line.partition(" = ")
            out[key] = value
    return out


def config_echo_text(report: dict[str, str]) -> str:
    lines = [f"{k[len('config.'):]} = {v}" for k, v in report.items()
             if k.startswith("config.")]
    return "\n".join(lines) + "\n"


# --- figures -----------------------------------------------------------------

def _heat_panel(ax, spec: g_.DomainSpec, cell_field: np.ndarray, title: str):
    field = cell_field
    if spec.dim == 3:
        field = cell_field[:, cell_field.shape[1] // 2, :]
    im = ax.imshow(field.T, origin="lower", aspect="auto",
                   extent=(0.0, spec.extents[0], -1.0, 1.0), cmap="viridis")
    ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    return im


def render_state_figure(spec: g_.DomainSpec, state: SaddleState, path) -> None:
    """Layout and potential heatmaps, with the interface overlaid when the
    layout is a graph."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.4), constrained_layout=True)
    im0 = _heat_panel(axes[0], spec, state.chi, "fluid layout")
    fig.colorbar(im0, ax=axes[0])
    try:
        eta = g_.graph_from_indicator(spec, state.chi)
        xs = spec.cell_axes()[0]
        if spec.dim == 3:
            eta = eta[:, eta.shape[1] // 2]
        axes[0].plot(xs, eta, "w-", linewidth=1.2)
    except g_.NotAGraphError:
        pass
    im1 = _heat_panel(axes[1], spec, _cell_center_values(spec, state.u), "potential u")
    fig.colorbar(im1, ax=axes[1])
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_history_figure(state: SaddleState, path) -> None:
    """Bound history and the per-sweep duality gap."""
    sweeps = [h["sweep"] for h in state.history]
    lower = [h["lower"] for h in state.history]
    upper = [h["upper"] for h in state.history]
    gap = [max(h["gap"], 1e-17) for h in state.history]
    best = [max(h["best_gap"], 1e-17) for h in state.history]
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.2), constrained_layout=True)
    axes[0].plot(sweeps, lower, "o-", label="lower")
    axes[0].plot(sweeps, upper, "s-", label="upper")
    axes[0].set_xlabel("sweep")
    axes[0].set_ylabel("bound")
    axes[0].legend()
    axes[1].semilogy(sweeps, gap, "o-", label="gap")
    axes[1].semilogy(sweeps, best, "s--", label="best gap")
    axes[1].set_xlabel("sweep")
    axes[1].set_ylabel("duality gap")
    axes[1].legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)


SWEEP_COLUMNS = ("run", "converged", "exit_code", "lower", "upper", "gap",
                 "u_norm", "norm_bound", "bottom_distance", "bottom_bound")


def write_sweep_csv(path, rows: list[dict], varied: list[str]) -> None:
    header = ["run"] + varied + list(SWEEP_COLUMNS[1:])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [str(row["run"])]
            cells += [repr(float(row[k])) for k in varied]
            for key in SWEEP_COLUMNS[1:]:
                val = row[key]
                if isinstance(val, (bool, np.bool_)):
                    cells.append("true" if val else "false")
                elif isinstance(val, (float, np.floating)):
                    cells.append(repr(float(val)))
                else:
                    cells.append(str(val))
            fh.write(",".join(cells) + "\n")


def render_sweep_figure(rows: list[dict], varied: list[str], path) -> None:
    """Gap and bound margins across the runs of a parameter sweep."""
    idx = np.arange(len(rows))
    labels = ["\n".join(f"{k.split('.')[-1]}={row[k]:g}" for k in varied) for row in rows]
    fig, axes = plt.subplots(1, 2, figsize=(10.0, 3.4), constrained_layout=True)
    axes[0].semilogy(idx, [max(r["gap"], 1e-17) for r in rows], "o-")
    axes[0].set_xticks(idx, labels, fontsize=7)
    axes[0].set_ylabel("duality gap")
    axes[1].plot(idx, [r["norm_bound"] - r["u_norm"] for r in rows], "o-",
                 label="norm margin")
    axes[1].plot(idx, [r["bottom_bound"] - r["bottom_distance"] for r in rows], "s-",
                 label="bottom margin")
    axes[1].axhline(0.0, color="k", linewidth=0.8)
    axes[1].set_xticks(idx, labels, fontsize=7)
    axes[1].legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)
