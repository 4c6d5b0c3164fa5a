"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import Dendrogram  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}

MARKERS = "osD^v<>ph*"


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def loss_trace(trace, path) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(1, 2, figsize=(7.5, 2.8))
        for split, style in (("train", "-"), ("val", "--")):
            rows = [r for r in trace if r.split == split]
            if not rows:
                continue
            ep = [r.epoch for r in rows]
            ax[0].plot(ep, [r.nce for r in rows], style, label=f"{split} nce")
            ax[1].plot(ep, [r.reg for r in rows], style, label=f"{split} reg")
        ax[0].set_xlabel("epoch")
        ax[0].set_ylabel("contrastive loss")
        ax[1].set_xlabel("epoch")
        ax[1].set_ylabel("arrangement loss")
        if any(r.reg > 0 for r in trace):
            ax[1].set_yscale("log")
        for a in ax:
            a.legend(frameon=False)
        _save(fig, path)


def projection(coords, classes, path, proto_coords=None, proto_classes=None, explained=None) -> None:
    """Scatter of 2-D embedding coordinates, coloured by class."""
    coords = np.asarray(coords)
    classes = np.asarray(classes)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        cmap = plt.get_cmap("tab10")
        for c in np.unique(classes):
            sel = classes == c
            ax.scatter(coords[sel, 0], coords[sel, 1], s=6, alpha=0.5, color=cmap(int(c) % 10), label=f"class {c}")
        if proto_coords is not None:
            pc = np.asarray(proto_coords)
            for c in np.unique(proto_classes):
                sel = np.asarray(proto_classes) == c
                ax.scatter(pc[sel, 0], pc[sel, 1], s=50, marker=MARKERS[int(c) % len(MARKERS)],
                           color=cmap(int(c) % 10), edgecolor="k", linewidth=0.6)
        if explained is not None:
            ax.set_xlabel(f"PC1 ({100 * explained[0]:.1f}%)")
            ax.set_ylabel(f"PC2 ({100 * explained[1]:.1f}%)")
        ax.legend(frameon=False, markerscale=2)
        _save(fig, path)


def _draw_dendrogram(ax, dendro: Dendrogram, orientation: str) -> None:
    n = dendro.n_leaves
    pos = {leaf: i for i, leaf in enumerate(dendro.leaf_order())}
    height = {i: 0.0 for i in range(n)}
    for i, (a, b, h, _) in enumerate(dendro.merges):
        node = n + i
        pa, pb = pos[a], pos[b]
        xs = [pa, pa, pb, pb]
        ys = [height[a], h, h, height[b]]
        if orientation == "left":
            ax.plot(ys, xs, color="k", lw=0.6)
        else:
            ax.plot(xs, ys, color="k", lw=0.6)
        pos[node] = 0.5 * (pa + pb)
        height[node] = h
    ax.set_axis_off()


def clustered_heatmap(matrix, row_dendro: Dendrogram, col_dendro: Dendrogram, row_labels, path) -> None:
    """Prototype matrix reordered by both dendrograms, trees drawn on the margins."""
    M = np.asarray(matrix)
    ro, co = row_dendro.leaf_order(), col_dendro.leaf_order()
    with plt.rc_context(RC):
        fig = plt.figure(figsize=(8, 0.18 * len(ro) + 1.5))
        grid = fig.add_gridspec(2, 2, width_ratios=(1, 5), height_ratios=(1, 5), wspace=0.02, hspace=0.02)
        top = fig.add_subplot(grid[0, 1])
        left = fig.add_subplot(grid[1, 0])
        main = fig.add_subplot(grid[1, 1])
        _draw_dendrogram(top, col_dendro, "top")
        _draw_dendrogram(left, row_dendro, "left")
        left.invert_xaxis()
        left.set_ylim(-0.5, len(ro) - 0.5)
        top.set_xlim(-0.5, len(co) - 0.5)
        main.imshow(M[np.ix_(ro, co)], aspect="auto", cmap="RdBu_r", origin="lower")
        main.set_yticks(range(len(ro)))
        main.set_yticklabels([row_labels[i] for i in ro], fontsize=6)
        main.yaxis.tick_right()
        main.set_xticks([])
        main.set_xlabel("feature")
        _save(fig, path)


def retrieval_curves(rows, path, title=None) -> None:
    """P@K against K, one line per attribute-match threshold."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.8, 2.8))
        for th in dict.fromkeys(r[0] for r in rows):
            pts = [(r[1], r[2]) for r in rows if r[0] == th]
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"matches {th}")
        ax.set_xlabel("K")
        ax.set_ylabel("P@K")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)
