"""Evaluation and alignment diagnostics.

Per-class IoU / mIoU from a confusion matrix, the per-class cluster-center
distance between domain feature clusters (normalized to its value at the
first evaluation), a discriminator convergence statistic, and deterministic
CSV / JSON / SVG export of run records.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import svgplot


class ConfusionMatrix:
    """C x C ground-truth-by-prediction pixel counts."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def add_batch(self, pred, gt):
        pred = np.asarray(pred).ravel()
        gt = np.asarray(gt).ravel()
        if pred.shape != gt.shape:
            raise ValueError(f"ConfusionMatrix: {pred.shape} predictions vs {gt.shape} labels")
        k = self.num_classes
        idx = gt * k + pred
        self.counts += np.bincount(idx, minlength=k * k).reshape(k, k)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def per_class_iou(conf: ConfusionMatrix):
    """IoU_c = TP / (TP + FP + FN); classes absent from both ground truth and
    prediction come back NaN and are excluded from the mean."""
    counts = conf.counts.astype(np.float64)
    tp = np.diag(counts)
    union = counts.sum(axis=0) + counts.sum(axis=1) - tp
    iou = np.where(union > 0, tp / np.maximum(union, 1), np.nan)
    miou = float(np.nanmean(iou)) if np.any(union > 0) else float("nan")
    return iou, miou


def class_feature_centers(features, labels, num_classes: int):
    """Mean feature vector per class over all pixels of all images.

    ``features`` is a list of (F, H, W) arrays, ``labels`` the matching
    (H, W) maps.  Returns (centers (C, F), present (C,) bool).
    """
    if len(features) != len(labels):
        raise ValueError("class_feature_centers: features/labels length mismatch")
    f_dim = np.asarray(features[0]).shape[0]
    sums = np.zeros((num_classes, f_dim))
    pix = np.zeros(num_classes, dtype=np.int64)
    for feat, lab in zip(features, labels):
        feat = np.asarray(feat).reshape(f_dim, -1)
        lab = np.asarray(lab).ravel()
        sums += np.add.reduceat(
            np.zeros((0, f_dim)), [], axis=0).sum() if False else 0  # placeholder
    # vectorized accumulation
    sums = np.zeros((num_classes, f_dim))
    for feat, lab in zip(features, labels):
        feat = np.asarray(feat).reshape(f_dim, -1)
        lab = np.asarray(lab).ravel()
        for c in np.unique(lab):
            mask = lab == c
            sums[c] += feat[:, mask].sum(axis=1)
            pix[c] += int(mask.sum())
    present = pix > 0
    centers = np.full((num_classes, f_dim), np.nan)
    centers[present] = sums[present] / pix[present, None]
    return centers, present


def ccd(features, labels, domains, num_classes: int) -> np.ndarray:
    """Raw per-class Euclidean distance between the source and target
    feature-cluster centers; NaN where a class is absent in either domain."""
    src_idx = [i for i, d in enumerate(domains) if d == "source"]
    tgt_idx = [i for i, d in enumerate(domains) if d == "target"]
    if not src_idx or not tgt_idx:
        raise ValueError("ccd: need at least one image per domain")
    c_src, p_src = class_feature_centers([features[i] for i in src_idx],
                                         [labels[i] for i in src_idx], num_classes)
    c_tgt, p_tgt = class_feature_centers([features[i] for i in tgt_idx],
                                         [labels[i] for i in tgt_idx], num_classes)
    dist = np.full(num_classes, np.nan)
    both = p_src & p_tgt
    dist[both] = np.linalg.norm(c_src[both] - c_tgt[both], axis=1)
    return dist


class CcdSeries:
    """Per-class distances over evaluation epochs, normalized by the epoch-0
    entry from the same initialization (epoch 0 is exactly 1 where defined)."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.baseline = None
        self.entries = []           # (epoch, raw, normalized)

    def add(self, epoch, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        if self.baseline is None:
            self.baseline = raw.copy()
        with np.errstate(invalid="ignore", divide="ignore"):
            normalized = np.where(self.baseline > 0, raw / self.baseline, np.nan)
        self.entries.append((epoch, raw, normalized))
        return normalized


def d_convergence_stat(run, window_fraction: float = 0.1) -> dict:
    """Mean per-pixel |D output - 0.5| over the trailing window, per domain."""
    rows = [e for e in run.events
            if e["kind"] == "iteration" and e.get("d_src_dev") is not None]
    if not rows:
        raise ValueError("d_convergence_stat: run holds no discriminator statistics")
    n = max(1, math.ceil(window_fraction * len(rows)))
    tail = rows[-n:]
    return {"source": float(np.mean([e["d_src_dev"] for e in tail])),
            "target": float(np.mean([e["d_tgt_dev"] for e in tail]))}


# --- export --------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_header(num_classes: int) -> list:
    return (["iter", "method", "seed", "loss_seg", "loss_weight", "loss_advG",
             "loss_advD", "miou"]
            + [f"iou_class_{c}" for c in range(num_classes)]
            + [f"ccd_class_{c}" for c in range(num_classes)]
            + ["dstat_src", "dstat_tgt"])


def _num_classes_of(run) -> int:
    for e in run.events:
        if e["kind"] == "eval":
            return len(e["iou"])
    return int(run.config.get("generator", {}).get("num_classes", 5))


def export_csv(run, path):
    """One row per recorded event; unknown-at-that-event columns stay empty.

    Floats are written via repr, so re-importing reproduces them exactly.
    """
    num_classes = _num_classes_of(run)
    method = run.config.get("method")
    seed = run.config.get("seed")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(csv_header(num_classes))
        for e in run.events:
            row = [e["iter"], method, seed]
            if e["kind"] == "iteration":
                row += [_cell(e["seg"]), _cell(e["weight_disc"]),
                        _cell(e["adv_g"]), _cell(e["adv_d"]), ""]
                row += [""] * (2 * num_classes)
                row += [_cell(e.get("d_src_dev")), _cell(e.get("d_tgt_dev"))]
            elif e["kind"] == "eval":
                row += ["", "", "", "", _cell(e["miou"])]
                row += [_cell(v) for v in e["iou"]]
                row += [_cell(v) for v in e["ccd"]]
                row += ["", ""]
            else:
                continue
            writer.writerow(row)
    return [Path(path)]


def import_csv(path):
    """Read back an exported CSV as a list of dicts with floats restored."""
    rows = []
    with open(path, newline="") as f:
        for raw in csv.DictReader(f):
            row = {}
            for key, val in raw.items():
                if val == "":
                    row[key] = None
                else:
                    try:
                        row[key] = float(val) if ("." in val or "n" in val or "e" in val) else int(val)
                    except ValueError:
                        row[key] = val
            rows.append(row)
    return rows


def export_json(run, path):
    doc = {"config": run.config, "events": run.events}
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return [Path(path)]


def export_svg(run, out_dir):
    """Loss curves, normalized CCD curves, and final per-class CCD bars."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    iters = [e for e in run.events if e["kind"] == "iteration"]
    evals = [e for e in run.events if e["kind"] == "eval"]
    if iters:
        xs = [e["iter"] for e in iters]
        series = {"seg": (xs, [e["seg"] for e in iters])}
        if any(e["adv_g"] for e in iters):
            series["adv_G"] = (xs, [e["adv_g"] for e in iters])
            series["adv_D"] = (xs, [e["adv_d"] for e in iters])
        svg = svgplot.line_plot(series, "training losses", "iteration", "loss")
        (out / "loss_curves.svg").write_text(svg)
        written.append(out / "loss_curves.svg")
    if evals:
        num_classes = len(evals[0]["iou"])
        xs = [e["iter"] for e in evals]
        ccd_series = {f"class {c}": (xs, [e["ccd"][c] if e["ccd"][c] is not None else float("nan")
                                          for e in evals])
                      for c in range(num_classes)}
        svg = svgplot.line_plot(ccd_series, "normalized cluster-center distance",
                                "iteration", "d / d0")
        (out / "ccd_curves.svg").write_text(svg)
        written.append(out / "ccd_curves.svg")
        final = evals[-1]
        bars = {"final": [final["ccd"][c] if final["ccd"][c] is not None else float("nan")
                          for c in range(num_classes)]}
        svg = svgplot.bar_plot(bars, list(range(num_classes)),
                               "final normalized CCD per class", "class", "d / d0")
        (out / "ccd_bars.svg").write_text(svg)
        written.append(out / "ccd_bars.svg")
        miou_series = {"target mIoU": (xs, [e["miou"] for e in evals])}
        svg = svgplot.line_plot(miou_series, "target mIoU", "iteration", "mIoU")
        (out / "miou_curve.svg").write_text(svg)
        written.append(out / "miou_curve.svg")
    return written


def export(run, kind: str, path):
    """kind in {csv, json, svg-plot}; svg-plot treats ``path`` as a directory."""
    if kind == "csv":
        return export_csv(run, path)
    if kind == "json":
        return export_json(run, path)
    if kind == "svg-plot":
        return export_svg(run, path)
    raise ValueError(f"export: unknown kind {kind!r}")
