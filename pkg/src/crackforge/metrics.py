"""Scoring of predicted crack paths and displacement fields.

Binary crack rasters are compared pixelwise with the Sorensen-Dice / F1
score, 2TP / (2TP + FP + FN); true negatives are deliberately absent from
the score because background pixels dwarf the crack.  Predictions are
also classified qualitatively:

    Incorrect            discontinuous path, whatever its F1
    Correct              continuous and F1 >= cutoff (0.85 default)
    PlausibleAlternative continuous but F1 below the cutoff

"Continuous" means the crack pixels form exactly one 8-connected
component that reaches the leftmost column, where the initial crack
enters the domain.

Displacement predictions are scored with mean absolute error per channel
and in total (per-node error-vector magnitude), normalized by the mean
nodal displacement magnitude over all truth samples to give a
scale-free absolute percentage error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

CORRECT = "Correct"
PLAUSIBLE = "PlausibleAlternative"
INCORRECT = "Incorrect"

_EIGHT_CONN = np.ones((3, 3), dtype=int)


class ShapeMismatch(ValueError):
    """Prediction and truth rasters differ in shape."""


class EmptyCollection(ValueError):
    """Aggregate metrics need at least one sample."""


class ZeroNormalizer(ValueError):
    """All-zero truth displacements leave the percentage error undefined."""


class MissingPair(ValueError):
    """A sample exists in only one of the prediction/truth sets."""


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    f1: float
    wrong_pixels: int
    continuous: bool | None = None
    label: str | None = None

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "f1": self.f1, "wrong_pixels": self.wrong_pixels,
                "continuous": self.continuous, "label": self.label}


def _as_binary(raster) -> np.ndarray:
    a = np.asarray(raster)
    return a.astype(bool)


def f1_score(pred, truth) -> MetricsReport:
    """Pixelwise confusion counts and F1; 1.0 when both rasters are empty."""
    p = _as_binary(pred)
    t = _as_binary(truth)
    if p.shape != t.shape:
        raise ShapeMismatch(f"pred {p.shape} vs truth {t.shape}")
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    tn = int(np.sum(~p & ~t))
    denom = 2 * tp + fp + fn
    f1 = 1.0 if denom == 0 else 2.0 * tp / denom
    return MetricsReport(tp=tp, fp=fp, fn=fn, tn=tn, f1=f1, wrong_pixels=fp + fn)


def is_continuous(pred) -> bool:
    """One 8-connected crack component that touches the leftmost column."""
    p = _as_binary(pred)
    if not p.any():
        return False
    _, count = ndimage.label(p, structure=_EIGHT_CONN)
    return count == 1 and bool(p[:, 0].any())


def classify(pred, truth, cutoff: float = 0.85) -> str:
    """Qualitative label; discontinuous paths are Incorrect regardless of F1."""
    report = f1_score(pred, truth)
    if not is_continuous(pred):
        return INCORRECT
    return CORRECT if report.f1 >= cutoff else PLAUSIBLE


def full_report(pred, truth, cutoff: float = 0.85) -> MetricsReport:
    base = f1_score(pred, truth)
    cont = is_continuous(pred)
    label = INCORRECT if not cont else (CORRECT if base.f1 >= cutoff else PLAUSIBLE)
    return MetricsReport(tp=base.tp, fp=base.fp, fn=base.fn, tn=base.tn,
                         f1=base.f1, wrong_pixels=base.wrong_pixels,
                         continuous=cont, label=label)


def threshold_sweep(pairs, cutoffs) -> list[float]:
    """Fraction labeled Correct at each cutoff (continuity is cutoff-free)."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyCollection("threshold sweep needs at least one sample")
    scores = []
    for pred, truth in pairs:
        scores.append((is_continuous(pred), f1_score(pred, truth).f1))
    out = []
    for cut in cutoffs:
        n_correct = sum(1 for cont, f1 in scores if cont and f1 >= cut)
        out.append(n_correct / len(scores))
    return out


def displacement_errors(preds, truths) -> dict:
    """MAE (x, y, total) plus APE per sample and the aggregate MAPE.

    Each sample is a two-channel raster (..., 2) or a (2, n, n) stack of
    x and y displacement grids.  The total MAE uses the per-node Euclidean
    magnitude of the error vector.  APE_i = MAE_total_i / u_bar with u_bar
    the mean nodal displacement magnitude over all truth samples.
    """
    preds = [np.asarray(p, dtype=np.float64) for p in preds]
    truths = [np.asarray(t, dtype=np.float64) for t in truths]
    if not preds or len(preds) != len(truths):
        raise EmptyCollection("need matching, nonempty prediction/truth collections")

    def channels(a):
        if a.ndim == 3 and a.shape[0] == 2:
            return a[0], a[1]
        if a.ndim == 3 and a.shape[-1] == 2:
            return a[..., 0], a[..., 1]
        raise ShapeMismatch(f"expected a two-channel displacement raster, got {a.shape}")

    mae_x = []
    mae_y = []
    mae_tot = []
    truth_mag = []
    for p, t in zip(preds, truths):
        if p.shape != t.shape:
            raise ShapeMismatch(f"pred {p.shape} vs truth {t.shape}")
        px, py = channels(p)
        tx, ty = channels(t)
        dx = px - tx
        dy = py - ty
        mae_x.append(float(np.mean(np.abs(dx))))
        mae_y.append(float(np.mean(np.abs(dy))))
        mae_tot.append(float(np.mean(np.hypot(dx, dy))))
        truth_mag.append(float(np.mean(np.hypot(tx, ty))))

    u_bar = float(np.mean(truth_mag))
    if u_bar == 0.0:
        raise ZeroNormalizer("truth displacements are identically zero")
    ape = [m / u_bar for m in mae_tot]
    return {
        "mae_x": float(np.mean(mae_x)),
        "mae_y": float(np.mean(mae_y)),
        "mae_total": float(np.mean(mae_tot)),
        "normalizer": u_bar,
        "ape": ape,
        "mape": float(np.mean(ape)),
    }


def aggregate_report(reports: list[MetricsReport]) -> dict:
    """Dataset-level summary: mean F1 overall and by continuity group,
    label fractions, and wrong-pixel averages."""
    if not reports:
        raise EmptyCollection("no per-sample reports to aggregate")
    f1s = np.array([r.f1 for r in reports])
    cont = np.array([bool(r.continuous) for r in reports])
    wrong = np.array([r.wrong_pixels for r in reports])
    labels = [r.label for r in reports]
    n = len(reports)

    def mean_or_none(vals):
        return float(np.mean(vals)) if len(vals) else None

    return {
        "n_samples": n,
        "mean_f1": float(f1s.mean()),
        "mean_f1_continuous": mean_or_none(f1s[cont]),
        "mean_f1_discontinuous": mean_or_none(f1s[~cont]),
        "n_continuous": int(cont.sum()),
        "mean_wrong_pixels": float(wrong.mean()),
        "mean_wrong_pixels_continuous": mean_or_none(wrong[cont]),
        "mean_wrong_pixels_discontinuous": mean_or_none(wrong[~cont]),
        "fraction_correct": labels.count(CORRECT) / n,
        "fraction_plausible": labels.count(PLAUSIBLE) / n,
        "fraction_incorrect": labels.count(INCORRECT) / n,
    }
