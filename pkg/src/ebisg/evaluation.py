"""Evaluation suite: precision-recall, Brier scores, calibration, tract MAE.

All metrics operate on a PredictionSet plus a truth mapping (voter id to
race label) and are pure; method_comparison orchestrates them across
methods and match-status strata and can emit a plot-ready CSV bundle.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .posterior import Method, ModelSet, Prediction, PredictionSet, batch_predict
from .races import N_RACES, RACES, race_index
from .tables import IncomeTable, TableSet, VoterRecord, coverage_report


def _aligned(preds: Sequence[Prediction], truth: Mapping[str, str]):
    """Probability matrix and integer truth labels, aligned to prediction order."""
    P = np.empty((len(preds), N_RACES))
    y = np.empty(len(preds), dtype=np.int64)
    for i, p in enumerate(preds):
        label = truth.get(p.voter_id)
        if label is None:
            raise DataError(f"no truth label for voter {p.voter_id!r}")
        P[i] = p.probs
        y[i] = race_index(label)
    return P, y


def _rows(preds) -> Sequence[Prediction]:
    return preds.rows if isinstance(preds, PredictionSet) else preds


# --- precision-recall ---------------------------------------------------------


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class PrCurve:
    race: str
    points: tuple[PrPoint, ...]
    baseline: float  # prevalence of the race in the evaluated stratum
    empty_reason: Optional[str] = None


def precision_recall_curve(preds, truth: Mapping[str, str], race: str) -> PrCurve:
    """One-vs-rest curve swept over the distinct predicted probabilities.

    At each threshold t a voter is classified positive iff p >= t, so ties
    share a point. With no positive examples the curve is undefined and an
    empty curve carrying the reason is returned.
    """
    rows = _rows(preds)
    ri = race_index(race)
    if not rows:
        return PrCurve(race=race, points=(), baseline=0.0, empty_reason="empty stratum")
    P, y = _aligned(rows, truth)
    pos = y == ri
    n_pos = int(pos.sum())
    if n_pos == 0:
        return PrCurve(
            race=race, points=(), baseline=0.0,
            empty_reason=f"no positive examples of race {race!r}",
        )
    p = P[:, ri]
    order = np.argsort(-p, kind="stable")
    p_sorted = p[order]
    pos_sorted = pos[order]
    cum_tp = np.cumsum(pos_sorted)
    cum_fp = np.cumsum(~pos_sorted)
    # Last index of each run of equal probabilities = counts for p >= threshold.
    distinct = np.flatnonzero(np.diff(p_sorted, append=-np.inf))
    points = []
    for i in distinct:
        tp, fp = int(cum_tp[i]), int(cum_fp[i])
        points.append(
            PrPoint(
                threshold=float(p_sorted[i]),
                precision=tp / (tp + fp),
                recall=tp / n_pos,
                tp=tp,
                fp=fp,
                fn=n_pos - tp,
            )
        )
    return PrCurve(race=race, points=tuple(points), baseline=n_pos / len(rows))


# --- Brier scores ---------------------------------------------------------------


def brier_score(preds, truth: Mapping[str, str], race: str) -> float:
    """Mean squared difference between p_race and the binary race indicator."""
    rows = _rows(preds)
    if not rows:
        raise DataError("brier_score: empty prediction set")
    P, y = _aligned(rows, truth)
    ri = race_index(race)
    ind = (y == ri).astype(np.float64)
    return float(np.mean((P[:, ri] - ind) ** 2))


def mean_brier(preds, truth: Mapping[str, str]) -> float:
    """Macro average of the six per-race Brier scores."""
    rows = _rows(preds)
    if not rows:
        raise DataError("mean_brier: empty prediction set")
    P, y = _aligned(rows, truth)
    onehot = np.eye(N_RACES)[y]
    return float(np.mean((P - onehot) ** 2))


@dataclass(frozen=True)
class TractBrier:
    geo_id: str
    income: float
    n_voters: int
    race_counts: np.ndarray  # (6,) true-race counts among evaluated voters
    brier: np.ndarray  # (6,) per-race tract Brier over all evaluated voters


@dataclass(frozen=True)
class BrierByDecile:
    """Per-race, per-decile weighted mean tract Brier.

    values[race_idx][d] is None when the decile holds no voter of that race.
    """

    values: tuple[tuple[Optional[float], ...], ...]  # (6, n_deciles)
    decile_tracts: tuple[tuple[str, ...], ...]
    tracts: tuple[TractBrier, ...]
    n_deciles: int = 10


def tract_briers(
    preds,
    truth: Mapping[str, str],
    income: IncomeTable,
    geos: Mapping[str, str],
) -> list[TractBrier]:
    """Per-tract Brier scores over the evaluated voters, with income attached."""
    rows = _rows(preds)
    P, y = _aligned(rows, truth)
    by_tract: dict[str, list[int]] = {}
    for i, pred in enumerate(rows):
        gid = geos.get(pred.voter_id)
        if gid is None:
            raise DataError(f"no geounit for voter {pred.voter_id!r}")
        by_tract.setdefault(gid, []).append(i)
    out = []
    onehot = np.eye(N_RACES)
    for gid in sorted(by_tract):
        idx = np.asarray(by_tract[gid])
        sq = (P[idx] - onehot[y[idx]]) ** 2  # (n, 6)
        counts = np.bincount(y[idx], minlength=N_RACES).astype(np.float64)
        out.append(
            TractBrier(
                geo_id=gid,
                income=income.income(gid),
                n_voters=len(idx),
                race_counts=counts,
                brier=sq.mean(axis=0),
            )
        )
    return out


def brier_by_income_decile(
    preds,
    truth: Mapping[str, str],
    income: IncomeTable,
    geos: Mapping[str, str],
    n_deciles: int = 10,
    decile_mode: str = "tracts",
) -> BrierByDecile:
    """Tract Briers averaged within income deciles, weighted by voters of
    the relevant race.

    Deciles are equal-count groups of tracts ranked by median income (ties
    broken by geo id); ``decile_mode="voters"`` instead cuts so deciles
    hold equal numbers of evaluated voters.
    """
    if decile_mode not in ("tracts", "voters"):
        raise ConfigError(f"decile_mode must be 'tracts' or 'voters', got {decile_mode!r}")
    tracts = tract_briers(preds, truth, income, geos)
    if not tracts:
        raise DataError("brier_by_income_decile: no tracts to score")
    ranked = sorted(tracts, key=lambda t: (t.income, t.geo_id))
    if decile_mode == "tracts":
        groups = [list(part) for part in np.array_split(np.arange(len(ranked)), n_deciles)]
    else:
        total = sum(t.n_voters for t in ranked)
        bounds = [total * (d + 1) / n_deciles for d in range(n_deciles)]
        groups = [[] for _ in range(n_deciles)]
        seen, d = 0, 0
        for i, t in enumerate(ranked):
            seen += t.n_voters
            groups[d].append(i)
            while d < n_deciles - 1 and seen >= bounds[d]:
                d += 1
    values = []
    decile_tracts = []
    for r in range(N_RACES):
        row: list[Optional[float]] = []
        for group in groups:
            w = np.array([ranked[i].race_counts[r] for i in group], dtype=np.float64)
            if w.sum() <= 0:
                row.append(None)
                continue
            b = np.array([ranked[i].brier[r] for i in group])
            row.append(float((b * w).sum() / w.sum()))
        values.append(tuple(row))
    for group in groups:
        decile_tracts.append(tuple(ranked[i].geo_id for i in group))
    return BrierByDecile(
        values=tuple(values),
        decile_tracts=tuple(decile_tracts),
        tracts=tuple(ranked),
        n_deciles=n_deciles,
    )


# --- calibration -------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationBin:
    low: float
    high: float
    mean_predicted: Optional[float]
    observed_frequency: Optional[float]
    count: int


@dataclass(frozen=True)
class CalibrationTable:
    race: str
    bins: tuple[CalibrationBin, ...]

    @property
    def total(self) -> int:
        return sum(b.count for b in self.bins)


def calibration_table(preds, truth: Mapping[str, str], race: str, bins: int = 10) -> CalibrationTable:
    """Equal-width probability bins vs observed race frequency.

    Bins are right-open except the final bin, which is right-closed so a
    predicted probability of exactly 1 still lands in a bin.
    """
    if bins < 2:
        raise ConfigError(f"calibration needs at least 2 bins, got {bins}")
    rows = _rows(preds)
    ri = race_index(race)
    edges = np.linspace(0.0, 1.0, bins + 1)
    if not rows:
        empty = tuple(
            CalibrationBin(float(edges[b]), float(edges[b + 1]), None, None, 0) for b in range(bins)
        )
        return CalibrationTable(race=race, bins=empty)
    P, y = _aligned(rows, truth)
    p = P[:, ri]
    hit = (y == ri).astype(np.float64)
    which = np.minimum((p * bins).astype(np.int64), bins - 1)
    out = []
    for b in range(bins):
        mask = which == b
        count = int(mask.sum())
        if count:
            out.append(
                CalibrationBin(
                    low=float(edges[b]),
                    high=float(edges[b + 1]),
                    mean_predicted=float(p[mask].mean()),
                    observed_frequency=float(hit[mask].mean()),
                    count=count,
                )
            )
        else:
            out.append(CalibrationBin(float(edges[b]), float(edges[b + 1]), None, None, 0))
    return CalibrationTable(race=race, bins=tuple(out))


# --- tract-level MAE ------------------------------------------------------------------


@dataclass(frozen=True)
class MaeReport:
    race: str
    mae_points: Optional[float]  # percentage points; None when nothing qualifies
    n_tracts: int
    min_group: int
    count_mode: str
    empty_reason: Optional[str] = None


def tract_mae(
    preds,
    truth: Mapping[str, str],
    race: str,
    geos: Mapping[str, str],
    min_group: int = 20,
    count_mode: str = "race",
) -> MaeReport:
    """Mean |mean posterior - true share| over qualifying tracts, in points.

    A tract qualifies when it holds at least ``min_group`` voters of the
    relevant race (``count_mode="race"``, the default reading) or at least
    ``min_group`` evaluated voters in total (``count_mode="total"``).
    """
    if count_mode not in ("race", "total"):
        raise ConfigError(f"count_mode must be 'race' or 'total', got {count_mode!r}")
    rows = _rows(preds)
    if not rows:
        raise DataError("tract_mae: empty prediction set")
    P, y = _aligned(rows, truth)
    ri = race_index(race)
    by_tract: dict[str, list[int]] = {}
    for i, pred in enumerate(rows):
        gid = geos.get(pred.voter_id)
        if gid is None:
            raise DataError(f"no geounit for voter {pred.voter_id!r}")
        by_tract.setdefault(gid, []).append(i)
    errors = []
    for gid in sorted(by_tract):
        idx = np.asarray(by_tract[gid])
        n_race = int((y[idx] == ri).sum())
        group_size = n_race if count_mode == "race" else len(idx)
        if group_size < min_group:
            continue
        true_share = n_race / len(idx)
        errors.append(abs(float(P[idx, ri].mean()) - true_share) * 100.0)
    if not errors:
        return MaeReport(
            race=race, mae_points=None, n_tracts=0, min_group=min_group,
            count_mode=count_mode, empty_reason="no tract meets the qualifying threshold",
        )
    return MaeReport(
        race=race,
        mae_points=float(np.mean(errors)),
        n_tracts=len(errors),
        min_group=min_group,
        count_mode=count_mode,
    )


# --- multi-method comparison -----------------------------------------------------------


STRATA = ("all", "matched", "unmatched")


@dataclass
class StratumResult:
    stratum: str
    n: int
    mean_brier: Optional[float] = None
    brier: dict = field(default_factory=dict)  # race -> float
    pr: dict = field(default_factory=dict)  # race -> PrCurve
    calibration: dict = field(default_factory=dict)  # race -> CalibrationTable
    mae: dict = field(default_factory=dict)  # race -> MaeReport
    brier_decile: Optional[BrierByDecile] = None
    empty_reason: Optional[str] = None


@dataclass
class MethodResult:
    method: str
    predictions: PredictionSet
    strata: dict  # stratum name -> StratumResult
    error: Optional[str] = None


@dataclass
class ComparisonReport:
    methods: dict  # label -> MethodResult
    stratum_sizes: dict
    coverage: Optional[object] = None
    failures: dict = field(default_factory=dict)  # method label -> error string


def _stratum_rows(preds: PredictionSet, stratum: str) -> list[Prediction]:
    if stratum == "all":
        return list(preds.rows)
    if stratum == "matched":
        return [p for p in preds.rows if p.match_surname]
    if stratum == "unmatched":
        return [p for p in preds.rows if not p.match_surname]
    raise ConfigError(f"unknown stratum {stratum!r}; expected one of {STRATA}")


def method_comparison(
    voters: Sequence[VoterRecord],
    truth: Mapping[str, str],
    methods: Sequence[Method],
    tables: TableSet,
    models: ModelSet = ModelSet(),
    strata: Sequence[str] = STRATA,
    decile_mode: str = "tracts",
    mae_min_group: int = 20,
    mae_count_mode: str = "race",
) -> ComparisonReport:
    """Run every method and compute the full metric suite per stratum.

    A method that cannot run (missing model, missing table) is recorded as
    a failure without aborting the others.
    """
    if not methods:
        raise ConfigError("method_comparison: methods must be nonempty")
    for s in strata:
        if s not in STRATA:
            raise ConfigError(f"unknown stratum {s!r}; expected subset of {STRATA}")
    geos = {v.id: v.geo for v in voters}
    report = ComparisonReport(methods={}, stratum_sizes={})
    for method in methods:
        try:
            preds = batch_predict(voters, method, tables, models)
        except ConfigError as exc:
            report.failures[method.label] = str(exc)
            continue
        mres = MethodResult(method=method.label, predictions=preds, strata={})
        for stratum in strata:
            rows = _stratum_rows(preds, stratum)
            report.stratum_sizes.setdefault(stratum, len(rows))
            if not rows:
                mres.strata[stratum] = StratumResult(
                    stratum=stratum, n=0, empty_reason="no voters in stratum"
                )
                continue
            sres = StratumResult(stratum=stratum, n=len(rows))
            sres.mean_brier = mean_brier(rows, truth)
            for race in RACES:
                sres.brier[race] = brier_score(rows, truth, race)
                sres.pr[race] = precision_recall_curve(rows, truth, race)
                sres.calibration[race] = calibration_table(rows, truth, race)
                sres.mae[race] = tract_mae(
                    rows, truth, race, geos, min_group=mae_min_group, count_mode=mae_count_mode
                )
            if tables.income is not None:
                sres.brier_decile = brier_by_income_decile(
                    rows, truth, tables.income, geos, decile_mode=decile_mode
                )
            mres.strata[stratum] = sres
        report.methods[method.label] = mres
    if tables.firstnames is not None:
        report.coverage = coverage_report(tables.surnames, tables.firstnames, list(voters))
    return report


# --- bundle emission ----------------------------------------------------------------------


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def write_report_bundle(report: ComparisonReport, outdir, extra_manifest: Optional[dict] = None) -> None:
    """Emit the CSV bundle plus a JSON manifest under ``outdir``.

    Layout: one subdirectory per stratum holding pr_<method>_<race>.csv,
    calibration_<method>.csv, brier_decile.csv, and mae.csv; coverage.csv
    and manifest.json at the root.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"methods": {}, "stratum_sizes": report.stratum_sizes, "failures": report.failures}
    decile_rows: dict[str, list] = {}
    mae_rows: dict[str, list] = {}
    for label, mres in report.methods.items():
        summary["methods"][label] = {}
        for stratum, sres in mres.strata.items():
            sdir = outdir / stratum
            sdir.mkdir(exist_ok=True)
            entry: dict = {"n": sres.n}
            if sres.empty_reason:
                entry["empty_reason"] = sres.empty_reason
                summary["methods"][label][stratum] = entry
                continue
            entry["mean_brier"] = sres.mean_brier
            entry["brier"] = dict(sres.brier)
            entry["mae_points"] = {race: rep.mae_points for race, rep in sres.mae.items()}
            summary["methods"][label][stratum] = entry
            for race, curve in sres.pr.items():
                with open(sdir / f"pr_{label}_{race}.csv", "w", newline="", encoding="utf-8") as f:
                    w = csv.writer(f)
                    w.writerow(["threshold", "precision", "recall", "baseline"])
                    for pt in curve.points:
                        w.writerow([_fmt(pt.threshold), _fmt(pt.precision), _fmt(pt.recall), _fmt(curve.baseline)])
            with open(sdir / f"calibration_{label}.csv", "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f)
                w.writerow(["race", "bin_low", "bin_high", "mean_predicted", "observed_frequency", "count"])
                for race, table in sres.calibration.items():
                    for b in table.bins:
                        w.writerow([race, _fmt(b.low), _fmt(b.high), _fmt(b.mean_predicted), _fmt(b.observed_frequency), b.count])
            if sres.brier_decile is not None:
                rows = decile_rows.setdefault(stratum, [])
                for ri, race in enumerate(RACES):
                    for d in range(sres.brier_decile.n_deciles):
                        val = sres.brier_decile.values[ri][d]
                        rows.append([label, race, d + 1, _fmt(val), len(sres.brier_decile.decile_tracts[d])])
            rows = mae_rows.setdefault(stratum, [])
            for race, rep in sres.mae.items():
                rows.append([label, race, _fmt(rep.mae_points), rep.n_tracts, rep.min_group, rep.count_mode])
    for stratum, rows in decile_rows.items():
        with open(outdir / stratum / "brier_decile.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["method", "race", "decile", "brier", "n_tracts"])
            w.writerows(rows)
    for stratum, rows in mae_rows.items():
        with open(outdir / stratum / "mae.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["method", "race", "mae_points", "n_tracts", "min_group", "count_mode"])
            w.writerows(rows)
    if report.coverage is not None:
        with open(outdir / "coverage.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(
                f,
                fieldnames=[
                    "surname_status", "fn_status", "race",
                    "pct_within_surname_group", "group_n", "group_pct_of_total",
                ],
            )
            w.writeheader()
            for row in report.coverage.rows():
                row = dict(row)
                row["pct_within_surname_group"] = f"{row['pct_within_surname_group']:.6f}"
                row["group_pct_of_total"] = f"{row['group_pct_of_total']:.6f}"
                w.writerow(row)
    manifest = {"races": list(RACES), **summary}
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
