"""Figure output for reports. Every figure is written as a standalone SVG
next to the CSV holding its data."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METHOD_COLORS = {
    "oracle": "#1565C0",
    "ordinal-gt": "#2E7D32",
    "ordinal-pred": "#E65100",
    "mean": "#616161",
    "baseline": "#C62828",
}
SAMPLING_BLUES = ["#0D47A1", "#1565C0", "#1976D2", "#1E88E5", "#42A5F5", "#90CAF9"]


def setup_style():
    plt.rcParams.update({
        "font.family": "sans-serif",
        "font.size": 10,
        "axes.titlesize": 11,
        "axes.labelsize": 10,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "legend.frameon": False,
        "figure.facecolor": "white",
        "savefig.facecolor": "white",
        "savefig.bbox": "tight",
        # stable element ids so identical data gives identical files
        "svg.hashsalt": "poselift",
    })


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_ablation(curve, path, methods=None, title="Effect of the number of samples"):
    """Error (mm) against sample count, one line per method."""
    setup_style()
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    methods = methods or list(curve.errors)
    for i, m in enumerate(methods):
        color = METHOD_COLORS.get(m, SAMPLING_BLUES[i % len(SAMPLING_BLUES)])
        ax.plot(curve.ks, curve.errors[m], marker="o", ms=3, lw=1.5, label=m, color=color)
    ax.set_xscale("log")
    ax.set_xticks(curve.ks)
    ax.set_xticklabels([str(k) for k in curve.ks])
    ax.set_xlabel("number of samples")
    ax.set_ylabel("MPJPE (mm)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_loss_curve(history, path, keys=("loss",)):
    setup_style()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    epochs = [row["epoch"] for row in history]
    for key in keys:
        if key in history[0]:
            ax.plot(epochs, [row[key] for row in history], lw=1.5, label=key)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_diversity(joint_names, per_joint_std, path):
    """Bar chart of per-joint candidate spread (mm)."""
    setup_style()
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.bar(range(len(joint_names)), per_joint_std, color="#1E88E5")
    ax.set_xticks(range(len(joint_names)))
    ax.set_xticklabels(joint_names, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("per-joint std (mm)")
    _save(fig, path)
