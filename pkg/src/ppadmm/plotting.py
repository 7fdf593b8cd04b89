"""Matplotlib figures written next to the CSV outputs."""

from __future__ import annotations

import csv
import logging
import pathlib
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

log = logging.getLogger(__name__)

# fixed metadata keeps PNG bytes stable across invocations
_META = {"Software": None}


def _save(fig, path: pathlib.Path) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=_META)
    plt.close(fig)
    log.debug("saved figure %s", path)
    return path


def loss_band(t, L_mean, L_range, path: pathlib.Path, label: Optional[str] = None, every: int = 0) -> pathlib.Path:
    """Mean average loss with the run-to-run range drawn as vertical bars."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    t = np.asarray(t)
    ax.plot(t, L_mean, lw=1.5, label=label)
    step = every or max(1, len(t) // 25)
    idx = np.arange(0, len(t), step)
    half = 0.5 * np.asarray(L_range)[idx]
    ax.errorbar(t[idx], np.asarray(L_mean)[idx], yerr=half, fmt="none", capsize=2, lw=0.8)
    ax.set_xlabel("iteration t")
    ax.set_ylabel("average loss L(t)")
    if label:
        ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def privacy_curve(t, P, path: pathlib.Path, label: Optional[str] = None) -> pathlib.Path:
    fig, ax = plt.subplots(figsize=(3.5, 3.5))
    ax.plot(t, P, lw=1.5, label=label)
    ax.set_xlabel("iteration t")
    ax.set_ylabel("privacy bound P(t)")
    if label:
        ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def consensus_curve(t, residuals: np.ndarray, path: pathlib.Path) -> pathlib.Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for r in np.atleast_2d(residuals):
        ax.semilogy(t, np.maximum(r, 1e-300), lw=0.8, alpha=0.7)
    ax.set_xlabel("iteration t")
    ax.set_ylabel("max edge |f_i - f_j|")
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)


def certificate_plot(rows, path: pathlib.Path) -> pathlib.Path:
    t = [r.t for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(t, [r.lhs for r in rows], lw=1.2, label="(1+delta) |Z(t)-Z*|_J^2")
    ax.semilogy(t, [r.rhs for r in rows], lw=1.2, ls="--", label="|Z(t-1)-Z*|_J^2")
    bad = [r for r in rows if not r.holds]
    if bad:
        ax.scatter([r.t for r in bad], [r.lhs for r in bad], color="red", s=8, zorder=3, label="violations")
    ax.set_xlabel("iteration t")
    ax.legend(frameon=False, fontsize="small")
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)


def experiment_figures(out: pathlib.Path, res, cfg) -> list[pathlib.Path]:
    """Loss band, privacy bound and consensus residual figures for one experiment."""
    from .experiment import aggregate_runs

    figs = pathlib.Path(out) / "figures"
    t = np.arange(cfg.T + 1)
    agg = aggregate_runs(res.losses)
    paths = [loss_band(t, agg["L_mean"], agg["L_range"], figs / "loss.png", label=cfg.mechanism)]
    if res.ledger is not None:
        paths.append(privacy_curve(t, np.concatenate([[0.0], res.ledger.prefix]), figs / "privacy.png", label=cfg.mechanism))
    cres = np.array([tr.consensus_residual(cfg.net) for tr in res.traces])
    paths.append(consensus_curve(t, cres, figs / "consensus.png"))
    return paths


def read_aggregate(path: pathlib.Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([float(r[k]) if r[k] != "" else np.nan for r in rows])  # noqa: E731
    return {"t": col("t"), "L_mean": col("L_mean"), "L_range": col("L_range"), "P": col("P")}


def compare_runs(run_dirs: Sequence[pathlib.Path], labels: Sequence[str], out: pathlib.Path) -> list[pathlib.Path]:
    """Overlay several experiment outputs: loss with range bars, and privacy bounds."""
    out = pathlib.Path(out)
    data = [read_aggregate(pathlib.Path(d) / "aggregate.csv") for d in run_dirs]

    fig, ax = plt.subplots(figsize=(6, 4))
    for agg, lab in zip(data, labels):
        line, = ax.plot(agg["t"], agg["L_mean"], lw=1.2, label=lab)
        step = max(1, len(agg["t"]) // 25)
        ax.errorbar(agg["t"][::step], agg["L_mean"][::step], yerr=0.5 * agg["L_range"][::step],
                    fmt="none", capsize=2, lw=0.7, color=line.get_color())
    ax.set_xlabel("iteration t")
    ax.set_ylabel("average loss L(t)")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    paths = [_save(fig, out / "compare_loss.png")]

    if any(np.isfinite(agg["P"]).any() for agg in data):
        fig, ax = plt.subplots(figsize=(4, 4))
        for agg, lab in zip(data, labels):
            if np.isfinite(agg["P"]).any():
                ax.plot(agg["t"], agg["P"], lw=1.2, label=lab)
        ax.set_xlabel("iteration t")
        ax.set_ylabel("privacy bound P(t)")
        ax.legend(frameon=False)
        ax.grid(alpha=0.3)
        paths.append(_save(fig, out / "compare_privacy.png"))
    return paths
