"""Segmentation metrics, nested group cross-validation with randomized
hyperparameter search, and the per-ship emission-proxy comparison.

Splits are always group-wise: every pixel of one plume image stays in a single
fold, in both the outer evaluation loop and the inner selection loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset
from .models import (DEFAULT_SPACES, FAMILY_NAMES, fit_family, predict_labels,
                     predict_scores, sample_params)
from .tracks import ShipInfo


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    ap: float | None
    support: tuple[int, int]  # (n_pos, n_neg)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    params: dict
    metrics: Metrics


@dataclass
class CVReport:
    family: str
    n_outer: int
    n_inner: int
    n_candidates: int
    seed: int
    folds: list[FoldResult]
    summary: dict[str, tuple[float, float]]        # metric -> (mean, std)
    pr_points: list[tuple[float, float, float]]    # (threshold, precision, recall)
    pooled: list[dict]                             # per-row out-of-fold results
    splits: list[dict] = field(default_factory=list)  # every train/test row split


@dataclass(frozen=True)
class EmissionProxy:
    mmsi: int
    e_s: float  # m^2 * m^3 / s^3

    def __post_init__(self) -> None:
        if self.e_s < 0:
            raise ValueError("e_s must be >= 0")


@dataclass(frozen=True)
class ShipEstimate:
    mmsi: int
    date: str
    no2_sum: float
    n_plume_pixels: int


def pr_metrics(labels, predictions) -> Metrics:
    """Precision, recall and F1 from binary predictions."""
    y = np.asarray(labels, dtype=int)
    p = np.asarray(predictions, dtype=int)
    if y.shape != p.shape:
        raise ValueError("length mismatch")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise ValueError("no positive labels")
    tp = int(np.sum((y == 1) & (p == 1)))
    fp = int(np.sum((y == 0) & (p == 1)))
    fn = n_pos - tp
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Metrics(precision=precision, recall=recall, f1=f1, ap=None,
                   support=(n_pos, int(np.sum(y == 0))))


def _sweep(labels, scores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Precision/recall at every distinct score cutoff, swept downward;
    tied scores collapse into one step."""
    y = np.asarray(labels, dtype=float)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("length mismatch")
    n_pos = y.sum()
    if n_pos == 0:
        raise ValueError("no positive labels")
    order = np.argsort(-s, kind="stable")
    ys = y[order]
    ss = s[order]
    last = np.nonzero(np.append(ss[1:] != ss[:-1], True))[0]
    tp = np.cumsum(ys)[last]
    pp = last + 1.0
    precision = tp / pp
    recall = tp / n_pos
    return ss[last], precision, recall


def average_precision(labels, scores) -> float:
    """Area under the precision-recall curve by step-wise summation:
    AP = sum_n (R_n - R_{n-1}) * P_n."""
    _, precision, recall = _sweep(labels, scores)
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def pr_curve(labels, scores) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) points of the PR curve."""
    thr, precision, recall = _sweep(labels, scores)
    return [(float(t), float(p), float(r))
            for t, p, r in zip(thr, precision, recall)]


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    sx = float(x.std())
    sy = float(y.std())
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance")
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


# --- nested group cross-validation ------------------------------------------

def _group_indices(groups: list[str]) -> dict[str, np.ndarray]:
    idx: dict[str, list[int]] = {}
    for i, g in enumerate(groups):
        idx.setdefault(g, []).append(i)
    return {g: np.array(v, dtype=int) for g, v in idx.items()}


def _deal(items: list[str], n_folds: int, rng: np.random.Generator,
          ) -> list[list[str]]:
    perm = [items[i] for i in rng.permutation(len(items))]
    return [perm[i::n_folds] for i in range(n_folds)]


def _rows_of(groups: list[str], table: dict[str, np.ndarray]) -> np.ndarray:
    if not groups:
        return np.array([], dtype=int)
    return np.concatenate([table[g] for g in groups])


def _candidate_score(family: str, X, y, aux, params, seed,
                     inner_splits: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean inner-fold AP (multivariate) or F1 (threshold baselines);
    inner folds whose validation part has no positives are skipped."""
    scores = []
    for tr, va in inner_splits:
        if va.size == 0 or y[va].sum() == 0 or y[tr].min() == y[tr].max():
            continue
        model = fit_family(family, X[tr], y[tr], aux[tr], params, seed)
        s = predict_scores(model, X[va], aux[va])
        if family in ("no2", "moran", "moran-high"):
            m = pr_metrics(y[va], predict_labels(model, X[va], aux[va]))
            scores.append(m.f1)
        else:
            scores.append(average_precision(y[va], s))
    if not scores:
        return -1.0
    return float(np.mean(scores))


def nested_cv(ds: LabeledDataset, family: str, search_space: dict | None = None,
              n_outer: int = 5, n_inner: int = 5, n_candidates: int = 10,
              seed: int = 0, base_params: dict | None = None) -> CVReport:
    """Group-wise nested cross-validation with randomized search.

    The outer loop holds out whole groups for evaluation; the inner loop
    samples n_candidates hyperparameter sets and selects by mean inner AP
    (F1 for threshold baselines). With a single candidate or an empty search
    space the inner loop degenerates to plain group k-fold CV.
    """
    if family not in FAMILY_NAMES:
        raise ValueError(f"unknown model family: {family}")
    space = DEFAULT_SPACES[family] if search_space is None else search_space
    X = ds.feature_matrix()
    y = ds.labels()
    aux = ds.moran_high_values()
    groups = ds.groups()
    table = _group_indices(groups)
    uniq = sorted(table)
    if len(uniq) < n_outer:
        raise ValueError("group count < fold count")
    rng = np.random.default_rng(seed)
    outer = _deal(uniq, n_outer, rng)

    folds: list[FoldResult] = []
    pooled: list[dict] = []
    pooled_scores: list[np.ndarray] = []
    pooled_labels: list[np.ndarray] = []
    splits: list[dict] = []
    for k, test_groups in enumerate(outer):
        train_groups = [g for j, fold in enumerate(outer) if j != k for g in fold]
        tr = _rows_of(train_groups, table)
        te = _rows_of(test_groups, table)
        splits.append({"kind": "outer", "fold": k,
                       "train_rows": tr.tolist(), "test_rows": te.tolist()})

        params: dict = dict(base_params or {})
        if space and n_candidates > 1:
            if len(train_groups) < n_inner:
                raise ValueError("group count < fold count")
            frng = np.random.default_rng([seed, k])
            candidates = [sample_params(space, frng) for _ in range(n_candidates)]
            inner = _deal(train_groups, n_inner, frng)
            inner_splits = []
            for j, val_groups in enumerate(inner):
                itr = _rows_of([g for m, fold in enumerate(inner) if m != j
                                for g in fold], table)
                iva = _rows_of(val_groups, table)
                inner_splits.append((itr, iva))
                splits.append({"kind": "inner", "fold": k, "inner_fold": j,
                               "train_rows": itr.tolist(),
                               "test_rows": iva.tolist()})
            best_score = -math.inf
            best = candidates[0]
            for cand in candidates:
                merged = dict(params)
                merged.update(cand)
                score = _candidate_score(family, X, y, aux, merged, seed,
                                         inner_splits)
                if score > best_score:
                    best_score = score
                    best = cand
            params.update(best)

        model = fit_family(family, X[tr], y[tr], aux[tr], params, seed)
        s = predict_scores(model, X[te], aux[te])
        p = predict_labels(model, X[te], aux[te])
        m = pr_metrics(y[te], p)
        ap = average_precision(y[te], s)
        folds.append(FoldResult(fold=k, params=params,
                                metrics=Metrics(precision=m.precision,
                                                recall=m.recall, f1=m.f1,
                                                ap=ap, support=m.support)))
        pooled_scores.append(s)
        pooled_labels.append(y[te])
        for i, row_idx in enumerate(te):
            r = ds.rows[row_idx]
            pooled.append({"group_id": r.group_id, "row": r.row, "col": r.col,
                           "score": float(s[i]), "pred": int(p[i]),
                           "label": int(y[row_idx])})

    summary = {}
    for name in ("precision", "recall", "f1", "ap"):
        vals = np.array([getattr(f.metrics, name) for f in folds])
        summary[name] = (float(vals.mean()), float(vals.std()))
    all_scores = np.concatenate(pooled_scores)
    all_labels = np.concatenate(pooled_labels)
    points = pr_curve(all_labels, all_scores)
    return CVReport(family=family, n_outer=n_outer, n_inner=n_inner,
                    n_candidates=n_candidates, seed=seed, folds=folds,
                    summary=summary, pr_points=points, pooled=pooled,
                    splits=splits)


# --- emission proxy ----------------------------------------------------------

def emission_proxy(info: ShipInfo) -> EmissionProxy:
    """Theoretical relative emission potential: length^2 * speed^3."""
    if info.length_m <= 0:
        raise ValueError("non-positive length")
    return EmissionProxy(mmsi=info.mmsi,
                         e_s=info.length_m ** 2 * info.speed_ms ** 3)


def split_group_id(group_id: str) -> tuple[int, str]:
    mmsi, _, date = group_id.partition("_")
    return int(mmsi), date


def ship_estimates(ds: LabeledDataset, predictions) -> list[ShipEstimate]:
    """Per-ship NO2 totals over the pixels predicted as plume."""
    p = np.asarray(predictions, dtype=int)
    if len(p) != len(ds.rows):
        raise ValueError("length mismatch")
    no2_col = 1  # FEATURE_BASE.index("no2")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for i, row in enumerate(ds.rows):
        sums.setdefault(row.group_id, 0.0)
        counts.setdefault(row.group_id, 0)
        if p[i] == 1:
            sums[row.group_id] += row.features[no2_col]
            counts[row.group_id] += 1
    out = []
    for gid in sorted(sums):
        mmsi, date = split_group_id(gid)
        n = counts[gid]
        out.append(ShipEstimate(mmsi=mmsi, date=date,
                                no2_sum=sums[gid] if n > 0 else 0.0,
                                n_plume_pixels=n))
    return out


def proxy_correlation(estimates: list[ShipEstimate],
                      proxies: list[EmissionProxy]) -> float:
    """Pearson r between per-ship NO2 totals and the emission proxy; ships with
    zero predicted plume pixels are excluded (count them separately)."""
    by_mmsi = {p.mmsi: p.e_s for p in proxies}
    usable = [e for e in estimates if e.n_plume_pixels > 0 and e.mmsi in by_mmsi]
    if len(usable) < 2:
        raise ValueError("insufficient ships")
    x = np.array([e.no2_sum for e in usable])
    y = np.array([by_mmsi[e.mmsi] for e in usable])
    return pearson(x, y)


# --- report output -----------------------------------------------------------

def report_to_json(report: CVReport) -> str:
    obj = {
        "family": report.family,
        "n_outer": report.n_outer,
        "n_inner": report.n_inner,
        "n_candidates": report.n_candidates,
        "seed": report.seed,
        "folds": [{
            "fold": f.fold,
            "params": f.params,
            "precision": f.metrics.precision,
            "recall": f.metrics.recall,
            "f1": f.metrics.f1,
            "ap": f.metrics.ap,
            "support": list(f.metrics.support),
        } for f in report.folds],
        "summary": {name: {"mean": ms[0], "std": ms[1]}
                    for name, ms in report.summary.items()},
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def pr_points_to_csv(points: list[tuple[float, float, float]]) -> str:
    from .grid import fmt_float
    lines = ["threshold,precision,recall"]
    for t, p, r in points:
        lines.append(f"{fmt_float(t)},{fmt_float(p)},{fmt_float(r)}")
    return "\n".join(lines) + "\n"


def estimates_to_csv(estimates: list[ShipEstimate],
                     proxies: list[EmissionProxy]) -> str:
    from .grid import fmt_float
    by_mmsi = {p.mmsi: p.e_s for p in proxies}
    lines = ["mmsi,date,no2_sum,e_s"]
    for e in estimates:
        lines.append(f"{e.mmsi},{e.date},{fmt_float(e.no2_sum)},"
                     f"{fmt_float(by_mmsi[e.mmsi])}")
    return "\n".join(lines) + "\n"


def oof_to_csv(pooled: list[dict]) -> str:
    from .grid import fmt_float
    lines = ["group_id,row,col,score,pred,label"]
    for row in pooled:
        lines.append(f"{row['group_id']},{row['row']},{row['col']},"
                     f"{fmt_float(row['score'])},{row['pred']},{row['label']}")
    return "\n".join(lines) + "\n"


def parse_oof_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "group_id,row,col,score,pred,label":
        raise ValueError("bad out-of-fold CSV header")
    out = []
    for ln in lines[1:]:
        gid, r, c, s, p, y = ln.split(",")
        out.append({"group_id": gid, "row": int(r), "col": int(c),
                    "score": float(s), "pred": int(p), "label": int(y)})
    return out
