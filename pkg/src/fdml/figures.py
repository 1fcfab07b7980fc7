"""Figure rendering for the report path: training curves per scheme,
written next to the delimited metrics output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_training_curves(rows, out_path):
    """Three panels over epochs: training objective, test log loss, test AUC.

    ``rows`` are metric trace rows, possibly spanning several schemes; one
    line per scheme per panel.
    """
    schemes = []
    for r in rows:
        if r.scheme not in schemes:
            schemes.append(r.scheme)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    panels = (
        ("train_objective", "training objective"),
        ("test_logloss", "test log loss"),
        ("test_auc", "test AUC"),
    )
    for ax, (attr, label) in zip(axes, panels):
        for scheme in schemes:
            pts = [(r.epoch, getattr(r, attr)) for r in rows if r.scheme == scheme]
            if pts:
                xs, ys = zip(*sorted(pts))
                ax.plot(xs, ys, marker=".", markersize=3, label=scheme)
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    if schemes:
        axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    plt.close(fig)
    return out_path
