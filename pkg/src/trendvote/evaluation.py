"""Binary classification metrics, paired t-test and report/series writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

from trendvote.labels import TrendLabel


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int
    positive_class: TrendLabel = TrendLabel.UP

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsRow:
    acc: float
    precision: float
    recall: float
    f1: float
    n_days: int
    fallback_rate: float = 0.0
    positive_class: TrendLabel = TrendLabel.UP
    zero_division: bool = False


@dataclass(frozen=True)
class SignificanceResult:
    t_statistic: float
    p_value: float
    n_pairs: int
    degenerate: bool = False


def _split_pairs(seq) -> tuple[list[date | None], list[TrendLabel]]:
    dates, labels = [], []
    for entry in seq:
        if isinstance(entry, tuple):
            d, label = entry
        else:
            d, label = None, entry
        dates.append(d)
        labels.append(TrendLabel(label))
    return dates, labels


def confusion(preds, truths, positive_class: TrendLabel = TrendLabel.UP) -> ConfusionCounts:
    """Count tp/fp/tn/fn. Elements are labels or ``(date, label)`` pairs; dated inputs must align."""
    pred_dates, p = _split_pairs(preds)
    truth_dates, t = _split_pairs(truths)
    if not p:
        raise ValueError("cannot evaluate an empty prediction sequence")
    if len(p) != len(t):
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(t)} truths")
    for i, (a, b) in enumerate(zip(pred_dates, truth_dates)):
        if a is not None and b is not None and a != b:
            raise ValueError(f"misaligned dates at position {i}: {a} vs {b}")
    pos = TrendLabel(positive_class)
    tp = fp = tn = fn = 0
    for yhat, y in zip(p, t):
        if yhat == pos:
            if y == pos:
                tp += 1
            else:
                fp += 1
        elif y == pos:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn, pos)


def metrics(c: ConfusionCounts, fallback_rate: float = 0.0) -> MetricsRow:
    total = c.total
    if total == 0:
        raise ValueError("no evaluated days")
    zero_div = False
    if c.tp + c.fp:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision, zero_div = 0.0, True
    if c.tp + c.fn:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall, zero_div = 0.0, True
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsRow(
        acc=(c.tp + c.tn) / total,
        precision=precision,
        recall=recall,
        f1=f1,
        n_days=total,
        fallback_rate=fallback_rate,
        positive_class=c.positive_class,
        zero_division=zero_div,
    )


def evaluate_predictions(predictions, positive_class: TrendLabel = TrendLabel.UP) -> MetricsRow:
    """Metrics for a list of ``DayPrediction``."""
    c = confusion(
        [(p.target_date, p.final) for p in predictions],
        [(p.target_date, p.truth) for p in predictions],
        positive_class,
    )
    fallback = sum(p.fallback_used for p in predictions) / len(predictions)
    return metrics(c, fallback)


# ---------------------------------------------------------------------------
# Student t tail


def _betacf(a: float, b: float, x: float, eps: float = 1e-15, max_iter: int = 10_000) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x in (0.0, 1.0):
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> SignificanceResult:
    """Two-sided paired t-test on per-day scores (typically 0/1 correctness)."""
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    if all(d == 0 for d in diffs):
        return SignificanceResult(0.0, 1.0, n, degenerate=True)
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0:
        return SignificanceResult(math.copysign(math.inf, mean), 0.0, n, degenerate=True)
    t = mean / math.sqrt(var / n)
    p = min(1.0, 2.0 * student_t_sf(abs(t), n - 1))
    return SignificanceResult(t, p, n)


def compare_predictions(a, b) -> SignificanceResult | None:
    """Paired test on per-day correctness, or None when the day sets differ."""
    if [p.target_date for p in a] != [p.target_date for p in b]:
        return None
    return paired_ttest([int(p.correct) for p in a], [int(p.correct) for p in b])


# ---------------------------------------------------------------------------
# reports


@dataclass
class RunResult:
    name: str
    config: Mapping[str, object]
    metrics: MetricsRow
    significance: SignificanceResult | None = None
    baseline: str | None = None


def _jsonable(value):
    if isinstance(value, TrendLabel):
        return value.value
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def run_record(run: RunResult) -> dict:
    sig = run.significance
    return {
        "name": run.name,
        "config": _jsonable(dict(run.config)),
        **_jsonable(asdict(run.metrics)),
        "baseline": run.baseline,
        "t_statistic": _jsonable(sig.t_statistic) if sig else None,
        "p_value": sig.p_value if sig else None,
        "n_pairs": sig.n_pairs if sig else None,
        "degenerate": sig.degenerate if sig else None,
    }


def format_table(runs: Sequence[RunResult], positive_class: TrendLabel = TrendLabel.UP) -> str:
    header = ["run", "Acc", "P", "R", "F1", "days", "fallback", "p-value"]
    rows = []
    for run in runs:
        m = run.metrics
        p = "" if run.significance is None else f"{run.significance.p_value:.4g} (vs {run.baseline})"
        rows.append(
            [
                run.name,
                f"{100 * m.acc:.2f}",
                f"{100 * m.precision:.2f}",
                f"{100 * m.recall:.2f}",
                f"{100 * m.f1:.2f}",
                str(m.n_days),
                f"{100 * m.fallback_rate:.1f}%",
                p,
            ]
        )
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    out = [f"Positive class: {TrendLabel(positive_class).value}", "", line(header)]
    out.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"


def write_series(path: str | Path, rows: Sequence[tuple[object, MetricsRow]]) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "acc", "p", "r", "f1"])
        for x, m in rows:
            writer.writerow([x, f"{m.acc:.6f}", f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}"])
    return path


def report(
    runs: Sequence[RunResult],
    out_dir: str | Path,
    positive_class: TrendLabel = TrendLabel.UP,
    series: Mapping[str, Sequence[tuple[object, MetricsRow]]] | None = None,
) -> dict[str, Path]:
    """Write results.jsonl, table.md and one ``series_<axis>.csv`` per series."""
    if not runs and not series:
        raise ValueError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    if runs:
        results = out / "results.jsonl"
        with results.open("w", encoding="utf-8", newline="\n") as fh:
            for run in runs:
                fh.write(json.dumps(run_record(run), ensure_ascii=False) + "\n")
        table = out / "table.md"
        table.write_text(format_table(runs, positive_class), encoding="utf-8")
        written.update(results=results, table=table)
    for axis, rows in (series or {}).items():
        written[f"series_{axis}"] = write_series(out / f"series_{axis}.csv", rows)
    return written
