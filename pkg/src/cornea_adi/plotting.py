"""Figures for study reports (files only, no interactive backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .harness import REFERENCE_SIDE, component_rms, compute_rms  # noqa: E402
from .simulator import DEVICE_DIMS  # noqa: E402


def _scales(results):
    return sorted({r.scale for r in results}, reverse=True)


def plot_scatter(results, path, mode=None):
    """Estimated pointer positions per scale, with nominal targets and the device."""
    scales = _scales(results)
    fig, axes = plt.subplots(1, len(scales), figsize=(3.6 * len(scales), 3.8), sharex=True, sharey=True, squeeze=False)
    mode = mode or (results[0].mode if results else "RECT")
    W, H = DEVICE_DIMS.get(mode, (70.0, 140.0))
    for ax, s in zip(axes[0], scales):
        sel = [r for r in results if r.scale == s]
        det = np.array([r.estimate for r in sel if r.detected]).reshape(-1, 2)
        pos = np.array(sorted({r.position for r in sel}))
        ax.add_patch(Rectangle((-W / 2, -H / 2), W, H, fill=False, lw=1.0, ec="0.4"))
        if det.size:
            ax.plot(det[:, 0], det[:, 1], ".", ms=3, alpha=0.6, color="C0", label="estimate")
        if pos.size:
            ax.plot(pos[:, 0], pos[:, 1], "x", ms=7, color="C3", label="target")
        rate = compute_rms(sel)[2] if sel else float("nan")
        ax.set_title(f"region {REFERENCE_SIDE * s:.0f} px, {100 * rate:.1f}%", fontsize=9)
        ax.set_xlabel("x (mm)")
        ax.set_aspect("equal")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("y (mm)")
    axes[0][0].legend(loc="lower left", fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_error_vs_resolution(results, path):
    """x, y and overall RMS against eye-region size, detection rate on a twin axis."""
    scales = _scales(results)
    side = [REFERENCE_SIDE * s for s in scales]
    rms, rx, ry, rate = [], [], [], []
    for s in scales:
        sel = [r for r in results if r.scale == s]
        a, _, q = compute_rms(sel)
        bx, by = component_rms(sel)
        rms.append(a)
        rx.append(bx)
        ry.append(by)
        rate.append(100 * q)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(side, rms, "o-", label="RMS")
    ax.plot(side, rx, "s--", label="x")
    ax.plot(side, ry, "^--", label="y")
    ax.set_xscale("log", base=2)
    ax.set_xticks(side)
    ax.set_xticklabels([f"{v:.0f}" for v in side])
    ax.set_xlabel("eye region (px)")
    ax.set_ylabel("error (mm)")
    ax.grid(alpha=0.3)
    tw = ax.twinx()
    tw.plot(side, rate, "k:", marker=".", label="detection")
    tw.set_ylabel("detection (%)")
    tw.set_ylim(0, 105)
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = tw.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, fontsize=8, frameon=False, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_debug_overlays(result, directory, stem=None):
    """PNG overlays for one pipeline run: eye crop with the limbus fit and the
    unwrapped texture with key points. Returns the written paths."""
    import os

    from PIL import Image, ImageDraw

    dbg = result.debug or {}
    stem = stem or f"{result.sample_id or 'frame'}_s{result.scale:g}"
    os.makedirs(directory, exist_ok=True)
    written = []
    region = dbg.get("region")
    if region is not None:
        crop = np.clip(region.crop, 0, 255).astype(np.uint8)
        im = Image.fromarray(crop).convert("RGB")
        d = ImageDraw.Draw(im)
        e = dbg.get("ellipse")
        if e is not None:
            pts = region.to_local(e.points(180))
            d.line([tuple(p) for p in np.vstack([pts, pts[:1]])], fill=(0, 255, 0), width=max(1, region.side // 400))
        p = os.path.join(directory, f"{stem}_eye.png")
        im.save(p)
        written.append(p)
    uw = dbg.get("unwrapped")
    if uw is not None:
        f = max(1, int(round(400 / max(uw.shape))))
        im = Image.fromarray(uw.texture).resize((uw.shape[1] * f, uw.shape[0] * f), Image.NEAREST)
        d = ImageDraw.Draw(im)
        for obj, col in ((dbg.get("device"), (0, 255, 0)), (dbg.get("pointer"), (255, 255, 0))):
            if obj is None:
                continue
            u0, v0, u1, v1 = obj.bbox
            d.rectangle([u0 * f, v0 * f, (u1 + 1) * f - 1, (v1 + 1) * f - 1], outline=col)
            for u, v in (obj.left, obj.center, obj.right):
                cu, cv = (u + 0.5) * f, (v + 0.5) * f
                d.ellipse([cu - 2, cv - 2, cu + 2, cv + 2], outline=col)
        p = os.path.join(directory, f"{stem}_texture.png")
        im.save(p)
        written.append(p)
    return written
