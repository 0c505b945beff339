"""CSV tables, SVG plots and provenance files for simulation runs."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from . import __version__

QUALITATIVE_NOTE = ("qualitative behaviour only: trajectories depend on the user-supplied "
                    "network, so they are not meant to match any particular published plot")


def _r(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def trajectory_rows(rec):
    """Long-format rows: t, agent, role, coord, position[, velocity]."""
    dynamic = rec.v_F is not None
    for g, t in enumerate(rec.times):
        for block, ids, role, vel in ((rec.x_F, rec.follower_ids, "follower", rec.v_F),
                                      (rec.x_R, rec.leader_ids, "leader", rec.v_R)):
            for a, agent in enumerate(ids):
                for c in range(block.shape[-1]):
                    row = [_r(t), agent, role, c, _r(block[g, a, c])]
                    if dynamic:
                        row.append(_r(vel[g, a, c]))
                    yield row


def write_trajectory(rec, path: Path):
    header = ["t", "agent", "role", "coord", "position"] + (["velocity"] if rec.v_F is not None else [])
    _write_csv(path, header, trajectory_rows(rec))


def write_error_series(rec, containment, path: Path):
    sq = rec.delta_sq()
    rows = []
    for g, t in enumerate(rec.times):
        rows.append([_r(t), "" if sq is None else _r(sq[g]), _r(containment[g])])
    _write_csv(path, ["t", "delta_sq", "containment_error"], rows)


def write_provenance(config, out: Path, master_seed: int, command: str = ""):
    lines = [f"version={__version__}", f"command={command}", f"master_seed={master_seed}"]
    lines += [f"config.{k}={v}" for k, v in config.describe()]
    lines.append(f"note={QUALITATIVE_NOTE}")
    (out / "provenance.txt").write_text("\n".join(lines) + "\n")


def emit_report(stats, verdicts, path, command: str = "") -> list[Path]:
    """Write the ensemble tables, verdicts and plots into directory ``path``."""
    if stats.grid is None or len(stats.grid) == 0:
        raise ValueError("cannot report an empty sample grid")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    rows = []
    for g, t in enumerate(stats.grid):
        msd = "" if stats.mean_sq_delta is None else _r(stats.mean_sq_delta[g])
        se = "" if stats.mean_sq_delta_se is None else _r(stats.mean_sq_delta_se[g])
        rows.append([_r(t), msd, se, _r(stats.containment_mean[g]), _r(stats.containment_max[g])])
    p = out / "summary.csv"
    _write_csv(p, ["t", "mean_sq_delta", "mean_sq_delta_se", "containment_mean", "containment_max"], rows)
    written.append(p)

    rows = []
    for r in range(stats.replicates):
        term = "" if stats.per_path_terminal is None else _r(stats.per_path_terminal[r])
        ab = stats.record.aborted_at[r]
        rows.append([r, term, _r(stats.containment[r, -1]), "" if np.isnan(ab) else _r(ab)])
    p = out / "replicates.csv"
    _write_csv(p, ["replicate", "delta_norm_T", "containment_T", "aborted_at"], rows)
    written.append(p)

    path0 = stats.record.path(0)
    p = out / "trajectory.csv"
    write_trajectory(path0, p)
    written.append(p)
    p = out / "errors.csv"
    write_error_series(path0, stats.containment[0], p)
    written.append(p)

    lines = [f"# {QUALITATIVE_NOTE}", f"replicates={stats.replicates}", f"aborted={stats.aborted}"]
    for i, v in enumerate(verdicts):
        lines += v.lines(prefix=f"verdict{i}.")
    p = out / "verdicts.txt"
    p.write_text("\n".join(lines) + "\n")
    written.append(p)

    write_provenance(stats.config, out, stats.master_seed, command)
    written.append(out / "provenance.txt")
    written += render_plots(out)
    return written


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _svg(fig, path: Path):
    import matplotlib
    matplotlib.rcParams["svg.hashsalt"] = "containment"
    fig.savefig(path, format="svg", metadata={"Date": None})


def render_plots(directory) -> list[Path]:
    """(Re)draw SVG plots from the CSV files stored in ``directory``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(directory)
    written = []
    summary = out / "summary.csv"
    if summary.exists():
        rows = _read_csv(summary)
        if not rows:
            raise ValueError(f"{summary} has no rows")
        t = np.array([float(r["t"]) for r in rows])
        if rows[0]["mean_sq_delta"] != "":
            msd = np.array([float(r["mean_sq_delta"]) for r in rows])
            se = np.array([float(r["mean_sq_delta_se"]) for r in rows])
            fig, ax = plt.subplots(figsize=(6, 4))
            pos = msd > 0
            ax.semilogy(t[pos], msd[pos], color="tab:blue", label="E|delta(t)|^2")
            lo = np.clip(msd - 2 * se, msd * 1e-3, None)
            ax.fill_between(t[pos], lo[pos], (msd + 2 * se)[pos], color="tab:blue", alpha=0.2, lw=0)
            ax.set_xlabel("t")
            ax.set_ylabel("mean squared error")
            ax.legend()
            fig.tight_layout()
            p = out / "mean_sq_delta.svg"
            _svg(fig, p)
            plt.close(fig)
            written.append(p)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(t, [float(r["containment_mean"]) for r in rows], label="mean")
        ax.plot(t, [float(r["containment_max"]) for r in rows], label="max", ls="--")
        ax.set_xlabel("t")
        ax.set_ylabel("containment error")
        ax.legend()
        fig.tight_layout()
        p = out / "containment.svg"
        _svg(fig, p)
        plt.close(fig)
        written.append(p)

    traj = out / "trajectory.csv"
    if traj.exists():
        rows = _read_csv(traj)
        coords = {int(r["coord"]) for r in rows}
        if coords == {0, 1}:
            series = {}
            for r in rows:
                key = (r["role"], int(r["agent"]))
                series.setdefault(key, {0: [], 1: []})[int(r["coord"])].append(float(r["position"]))
            fig, ax = plt.subplots(figsize=(5, 5))
            for (role, agent), xy in sorted(series.items()):
                color = "tab:red" if role == "leader" else "tab:blue"
                ax.plot(xy[0], xy[1], color=color, lw=1.5 if role == "leader" else 0.8)
                ax.plot(xy[0][-1], xy[1][-1], "o", color=color, ms=5)
                ax.annotate(str(agent), (xy[0][0], xy[1][0]), fontsize=8)
            ax.set_xlabel("x1")
            ax.set_ylabel("x2")
            ax.set_aspect("equal", adjustable="datalim")
            fig.tight_layout()
            p = out / "trajectories.svg"
            _svg(fig, p)
            plt.close(fig)
            written.append(p)
    return written
