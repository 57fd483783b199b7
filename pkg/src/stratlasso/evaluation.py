"""Test-set ROC analysis: AUC, ROC curves, one-sided DeLong tests, report tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .errors import MissingBaseline, SingleClass

MIN_CLASS_COUNT = 10


def _split(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d arrays of equal length")
    pos, neg = labels == 1, labels == 0
    if not np.all(pos | neg):
        raise ValueError("labels must be binary 0/1")
    if not pos.any() or not neg.any():
        raise SingleClass("both outcome classes are required")
    return scores, pos, neg


def auc(scores, labels):
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(equal)."""
    scores, pos, neg = _split(scores, labels)
    m, n = pos.sum(), neg.sum()
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - m * (m + 1) / 2.0) / (m * n))


@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, s in zip(self.thresholds, self.fpr, self.tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(s))])
        return buf.getvalue()


def roc_points(scores, labels):
    """Stepwise ROC curve over the distinct score values.

    The first point ``(0, 0)`` has threshold ``+inf``; each later point
    classifies ``score >= threshold`` as positive.  ``auc`` is the
    trapezoidal area, which equals :func:`auc` with midpoint ties.
    """
    scores, pos, neg = _split(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    tp = np.cumsum(pos[order])
    fp = np.cumsum(neg[order])
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tpr = np.r_[0.0, tp[last] / pos.sum()]
    fpr = np.r_[0.0, fp[last] / neg.sum()]
    thresholds = np.r_[np.inf, s[last]]
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, area)


def placement_values(scores, labels):
    """DeLong placement values with midpoint ties.

    Returns ``(v_pos, v_neg, auc)``: ``v_pos[i]`` is the share of negatives
    scored below positive ``i`` and ``v_neg[j]`` the share of positives
    scored above negative ``j``.
    """
    scores, pos, neg = _split(scores, labels)
    m, n = pos.sum(), neg.sum()
    r_all = rankdata(scores)
    r_pos = rankdata(scores[pos])
    r_neg = rankdata(scores[neg])
    v_pos = (r_all[pos] - r_pos) / n
    v_neg = 1.0 - (r_all[neg] - r_neg) / m
    return v_pos, v_neg, float(v_pos.mean())


@dataclass(frozen=True)
class RocComparison:
    auc_a: float
    auc_b: float
    delta_auc: float
    variance: float
    z: float
    p_one_sided: float
    degenerate: bool = False


def delong_one_sided(scores_base, scores_new, labels):
    """Paired DeLong test of ``H1: AUC(new) > AUC(base)``.

    Zero variance with zero difference gives ``p = 0.5``; zero variance with
    a nonzero difference is flagged ``degenerate`` and gets ``p`` of 0 or 1
    by the sign of the difference.
    """
    vp_a, vn_a, auc_a = placement_values(scores_base, labels)
    vp_b, vn_b, auc_b = placement_values(scores_new, labels)
    m, n = vp_a.size, vn_a.size
    dp, dn = vp_b - vp_a, vn_b - vn_a
    var = 0.0
    if m > 1:
        var += float(np.var(dp, ddof=1)) / m
    if n > 1:
        var += float(np.var(dn, ddof=1)) / n
    delta = auc_b - auc_a
    if var <= 1e-300 or not np.isfinite(var):
        if delta == 0.0:
            return RocComparison(auc_a, auc_b, 0.0, 0.0, 0.0, 0.5)
        z = math.copysign(math.inf, delta)
        return RocComparison(auc_a, auc_b, delta, 0.0, z, 0.0 if delta > 0 else 1.0, True)
    z = delta / math.sqrt(var)
    return RocComparison(auc_a, auc_b, delta, var, z, float(norm.sf(z)))


# --- report tables -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Run:
    """Test-set scores of one model for one outcome."""

    method: str
    data: str
    outcome: str
    scores: np.ndarray
    labels: np.ndarray


@dataclass
class Report:
    outcomes: list
    auc_rows: list       # (method, data, {outcome: auc}, avg, inc)
    compare_rows: list   # (method, metric, data, {outcome: value})
    significant: set     # (method, data, outcome) with p < 0.05
    warnings: list
    baseline: str
    inc_reference: tuple
    baseline_data: str | None = None

    def auc_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "data"] + self.outcomes + ["avg", "inc"])
        for method, data, vals, avg, inc in self.auc_rows:
            w.writerow([method, data] + [_fmt(vals.get(o)) for o in self.outcomes]
                       + [_fmt(avg), _fmt(inc)])
        return buf.getvalue()

    def compare_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "metric", "data"] + self.outcomes)
        for method, metric, data, vals in self.compare_rows:
            w.writerow([method, metric, data] + [_fmt(vals.get(o)) for o in self.outcomes])
        return buf.getvalue()

    def to_text(self):
        """Aligned plain-text tables; ``*`` marks p < 0.05."""
        ref_m, ref_d = self.inc_reference
        against = ("the same data" if self.baseline_data is None
                   else f"data {self.baseline_data}")
        lines = [f"# Inc. = row Avg. minus Avg. of {ref_m} trained on {ref_d}",
                 f"# p-values: one-sided DeLong, H1: method > baseline trained on {against}",
                 "", "ROC-AUC"]
        head = ["Method", "Data"] + self.outcomes + ["Avg.", "Inc."]
        body = []
        for method, data, vals, avg, inc in self.auc_rows:
            body.append([method, data] + [_fmt3(vals.get(o)) for o in self.outcomes]
                        + [_fmt3(avg), _fmt3(inc)])
        lines += _align([head] + body)
        lines += ["", f"P-values and Delta AUC vs {self.baseline}"]
        head = ["Method", "Metric", "Data"] + self.outcomes
        body = []
        for method, metric, data, vals in self.compare_rows:
            cells = []
            for o in self.outcomes:
                mark = "*" if (method, data, o) in self.significant else ""
                cells.append(_fmt3(vals.get(o)) + mark)
            body.append([method, metric, data] + cells)
        lines += _align([head] + body)
        if self.warnings:
            lines += [""] + [f"warning: {msg}" for msg in self.warnings]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return f"{v:.6f}"


def _fmt3(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return f"{v:.3f}"


def _align(rows):
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows]


def _is_group_only(data):
    return data not in ("Mix", "All")


def build_report(runs, baseline_key, inc_reference=None, min_class_count=MIN_CLASS_COUNT,
                 baseline_data=None):
    """AUC, p-value and Delta-AUC grids.

    One row per ``(method, data)``, one column per outcome.

    Parameters
    ----------
    runs : sequence of Run
    baseline_key : str
        Method name of the baseline.
    inc_reference : str, optional
        Data label of the baseline row that the ``inc`` column is measured
        against; defaults to the first group-only baseline row (or the first
        baseline row if there is none).
    min_class_count : int
        DeLong tests with fewer test rows in either class are skipped and
        reported as warnings with ``p = NA``.
    baseline_data : str, optional
        Compare every row against the baseline trained on this data label
        instead of the baseline on the row's own data.

    Raises
    ------
    MissingBaseline
        If a compared (data, outcome) cell has no baseline run.
    """
    outcomes, row_keys, cells = [], [], {}
    for run in runs:
        if run.outcome not in outcomes:
            outcomes.append(run.outcome)
        key = (run.method, run.data)
        if key not in row_keys:
            row_keys.append(key)
        cells[(run.method, run.data, run.outcome)] = run
    base_rows = [k for k in row_keys if k[0] == baseline_key]
    if not base_rows:
        raise MissingBaseline(f"no runs for baseline method {baseline_key!r}")
    if inc_reference is None:
        ref = next((k for k in base_rows if _is_group_only(k[1])), base_rows[0])
    else:
        ref = (baseline_key, inc_reference)
        if ref not in base_rows:
            raise MissingBaseline(f"no baseline row for data {inc_reference!r}")

    aucs = {k: auc(r.scores, r.labels) for k, r in cells.items()}
    averages = {}
    for method, data in row_keys:
        vals = [aucs[(method, data, o)] for o in outcomes if (method, data, o) in aucs]
        averages[(method, data)] = float(np.mean(vals))
    ref_avg = averages[ref]
    auc_rows = []
    for method, data in row_keys:
        vals = {o: aucs[(method, data, o)] for o in outcomes if (method, data, o) in aucs}
        avg = averages[(method, data)]
        auc_rows.append((method, data, vals, avg, avg - ref_avg))

    compare_rows, significant, warnings = [], set(), []
    for method, data in row_keys:
        if method == baseline_key and baseline_data in (None, data):
            continue
        pvals, deltas = {}, {}
        for o in outcomes:
            run = cells.get((method, data, o))
            if run is None:
                continue
            base_data = data if baseline_data is None else baseline_data
            base = cells.get((baseline_key, base_data, o))
            if base is None:
                raise MissingBaseline(
                    f"no {baseline_key!r} run for data={base_data!r}, outcome={o!r}")
            if not np.array_equal(base.labels, run.labels):
                raise ValueError(f"unpaired test rows for data={data!r}, outcome={o!r}")
            deltas[o] = aucs[(method, data, o)] - aucs[(baseline_key, base_data, o)]
            n_pos = int(np.sum(run.labels == 1))
            n_neg = int(np.sum(run.labels == 0))
            if min(n_pos, n_neg) < min_class_count:
                pvals[o] = float("nan")
                warnings.append(f"{method}/{data}/{o}: DeLong skipped "
                                f"({n_pos} positive, {n_neg} negative test rows)")
                continue
            cmp = delong_one_sided(base.scores, run.scores, run.labels)
            pvals[o] = cmp.p_one_sided
            if cmp.p_one_sided < 0.05:
                significant.add((method, data, o))
        compare_rows.append((method, "p_value", data, pvals))
        compare_rows.append((method, "delta_auc", data, deltas))
    return Report(outcomes, auc_rows, compare_rows, significant, warnings,
                  baseline_key, ref, baseline_data)
