"""Static PNG figures for comparison reports (Agg backend, deterministic)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_META = {"Software": None}
_COLORS = {"gan": "tab:green", "vae": "tab:blue", "lof": "tab:orange", "threshold": "tab:red"}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_timeline(reports, path):
    """Actual KPI with each detector's served predictions and event markers."""
    fig, ax = plt.subplots(figsize=(9, 4))
    ticks = range(len(reports[0].actual))
    ax.plot(ticks, reports[0].actual, color="black", lw=1, label="actual")
    for r in reports:
        color = _COLORS.get(r.detector)
        ax.plot(ticks, r.predicted, lw=1, color=color, label=f"predicted ({r.detector})")
        for e in r.events:
            if e.kind == "RetrainTriggered":
                ax.axvline(e.tick, color=color, ls="--", lw=0.8)
            elif e.kind == "ModelReplaced":
                ax.axvline(e.tick, color=color, ls=":", lw=0.8)
    for c in reports[0].change_points:
        ax.axvline(c, color="gray", lw=2, alpha=0.4)
    ax.set_xlabel(f"tick ({reports[0].tick_period_ms:g} ms)")
    ax.set_ylabel("throughput")
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    return _save(fig, path)


def plot_bars(rows, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [r["detector"] for r in rows]
    xs = range(len(rows))
    mrtt = [r["mean_mrtt_ms"] or 0.0 for r in rows]
    mrpt = [r["mean_mrpt_ms"] or 0.0 for r in rows]
    ax.bar([x - 0.2 for x in xs], mrtt, width=0.4, label="MRTT")
    ax.bar([x + 0.2 for x in xs], mrpt, width=0.4, label="MRPT")
    ax.set_xticks(list(xs), names)
    ax.set_ylabel("ms")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_pmf(pmfs, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.8 / max(len(pmfs), 1)
    for k, p in enumerate(pmfs):
        xs = [w * p.bucket_ticks + (k - (len(pmfs) - 1) / 2) * width * p.bucket_ticks
              for w in p.mass]
        ax.bar(xs, list(p.mass.values()), width=width * p.bucket_ticks,
               color=_COLORS.get(p.detector), label=p.detector)
    ax.set_xlabel("MRTT (ms)")
    ax.set_ylabel("% of instances")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
