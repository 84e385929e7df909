"""Metric suite: PR curves, Brier scores, calibration, MAE, comparisons."""

import json

import numpy as np
import pytest

from ebisg import (
    ConfigError,
    DataError,
    Method,
    ModelSet,
    brier_by_income_decile,
    brier_score,
    calibration_table,
    mean_brier,
    method_comparison,
    precision_recall_curve,
    tract_mae,
    write_report_bundle,
)
from ebisg.evaluation import tract_briers
from ebisg.posterior import Prediction
from ebisg.races import RACES
from ebisg.tables import IncomeTable

from conftest import pr_curve_bruteforce


def preds_from(probs, race="white"):
    """Build single-race prediction rows; probability mass parked on 'other'."""
    rows = []
    ri = RACES.index(race)
    for i, p in enumerate(probs):
        v = np.zeros(6)
        v[ri] = p
        v[-1] = 1 - p
        rows.append(Prediction(voter_id=f"v{i}", probs=v, match_surname=True, match_firstname=True))
    return rows


def truth_from(labels, race="white", other="other"):
    return {f"v{i}": (race if y else other) for i, y in enumerate(labels)}


class TestPrCurve:
    def test_perfect_predictor(self):
        rows = preds_from([1, 1, 1, 0, 0])
        truth = truth_from([1, 1, 1, 0, 0])
        curve = precision_recall_curve(rows, truth, "white")
        top = curve.points[0]
        assert top.precision == 1.0 and top.recall == 1.0
        assert curve.baseline == 0.6

    def test_constant_predictor_single_point(self):
        rows = preds_from([0.4] * 10)
        truth = truth_from([1, 0, 1, 0, 1, 0, 0, 0, 0, 0])
        curve = precision_recall_curve(rows, truth, "white")
        assert len(curve.points) == 1
        assert curve.points[0].precision == pytest.approx(0.3)
        assert curve.points[0].recall == 1.0

    def test_hand_fixture(self):
        rows = preds_from([0.9, 0.8, 0.7, 0.4, 0.3, 0.1])
        truth = truth_from([1, 1, 0, 1, 0, 0])
        curve = precision_recall_curve(rows, truth, "white")
        by_t = {round(p.threshold, 6): p for p in curve.points}
        assert by_t[0.7].precision == pytest.approx(2 / 3)
        assert by_t[0.7].recall == pytest.approx(2 / 3)
        assert by_t[0.9].precision == 1.0 and by_t[0.9].recall == pytest.approx(1 / 3)
        assert by_t[0.1].recall == 1.0

    def test_matches_bruteforce_exactly(self):
        rng = np.random.default_rng(8)
        probs = np.round(rng.random(300), 2)  # force ties
        labels = rng.integers(0, 2, 300)
        curve = precision_recall_curve(preds_from(probs), truth_from(labels), "white")
        reference = pr_curve_bruteforce(probs, labels)
        assert len(curve.points) == len(reference)
        for pt, (t, prec, rec, tp, fp, fn) in zip(curve.points, reference):
            assert pt.threshold == t
            assert pt.precision == prec and pt.recall == rec
            assert (pt.tp, pt.fp, pt.fn) == (tp, fp, fn)

    def test_recall_monotone_in_threshold(self):
        rng = np.random.default_rng(9)
        curve = precision_recall_curve(
            preds_from(rng.random(500)), truth_from(rng.integers(0, 2, 500)), "white"
        )
        recalls = [p.recall for p in curve.points]  # thresholds descending
        assert all(a <= b for a, b in zip(recalls, recalls[1:]))

    def test_no_positives_empty_with_reason(self):
        curve = precision_recall_curve(preds_from([0.5, 0.5]), truth_from([0, 0]), "white")
        assert curve.points == ()
        assert "no positive" in curve.empty_reason

    def test_strata_reconstruct_pooled_counts(self):
        rng = np.random.default_rng(10)
        probs = np.round(rng.random(400), 2)
        labels = rng.integers(0, 2, 400)
        matched = rng.integers(0, 2, 400).astype(bool)
        rows = []
        for i, (p, m) in enumerate(zip(probs, matched)):
            v = np.zeros(6)
            v[0] = p
            v[-1] = 1 - p
            rows.append(Prediction(f"v{i}", v, bool(m), True))
        truth = truth_from(labels)
        pooled = precision_recall_curve(rows, truth, "white")
        for pt in pooled.points:
            t = pt.threshold
            tp_m = sum(1 for p, y, m in zip(probs, labels, matched) if m and p >= t and y)
            tp_u = sum(1 for p, y, m in zip(probs, labels, matched) if not m and p >= t and y)
            fp_m = sum(1 for p, y, m in zip(probs, labels, matched) if m and p >= t and not y)
            fp_u = sum(1 for p, y, m in zip(probs, labels, matched) if not m and p >= t and not y)
            assert pt.tp == tp_m + tp_u
            assert pt.fp == fp_m + fp_u

    def test_missing_truth_label_rejected(self):
        rows = preds_from([0.5])
        with pytest.raises(DataError, match="truth"):
            precision_recall_curve(rows, {}, "white")


class TestBrier:
    def test_all_correct_is_zero(self):
        assert brier_score(preds_from([1, 1]), truth_from([1, 1]), "white") == 0.0

    def test_coin_flip_quarter(self):
        assert brier_score(preds_from([0.5] * 8), truth_from([1, 0, 1, 0, 1, 0, 1, 0]), "white") == pytest.approx(0.25)

    def test_hand_fixture(self):
        val = brier_score(preds_from([0.8, 0.3, 0.6]), truth_from([1, 0, 1]), "white")
        assert val == pytest.approx((0.2**2 + 0.3**2 + 0.4**2) / 3)
        assert round(val, 5) == 0.09667

    def test_mean_brier_is_macro_average(self):
        rows = preds_from([0.8, 0.3, 0.6])
        truth = truth_from([1, 0, 1])
        per_race = np.mean([brier_score(rows, truth, r) for r in RACES])
        assert mean_brier(rows, truth) == pytest.approx(per_race)


def tract_rows(spec):
    """spec: list of (geo, p_white, is_white). Returns (rows, truth, geos)."""
    rows, truth, geos = [], {}, {}
    for i, (geo, p, y) in enumerate(spec):
        v = np.zeros(6)
        v[0] = p
        v[-1] = 1 - p
        vid = f"v{i}"
        rows.append(Prediction(vid, v, True, True))
        truth[vid] = "white" if y else "other"
        geos[vid] = geo
    return rows, truth, geos


class TestBrierByDecile:
    def test_weighted_mean_by_hand(self):
        # one decile holding two tracts: Brier .1 with 10 white voters and
        # Brier .3 with 30 -> (0.1*10 + 0.3*30) / 40 = 0.25
        spec = []
        for _ in range(10):
            spec.append(("a", 1 - np.sqrt(0.1), 1))  # (p-1)^2 = 0.1
        for _ in range(30):
            spec.append(("b", 1 - np.sqrt(0.3), 1))  # (p-1)^2 = 0.3
        rows, truth, geos = tract_rows(spec)
        income = IncomeTable(incomes={"a": 100.0, "b": 200.0})
        out = brier_by_income_decile(rows, truth, income, geos, n_deciles=1)
        white = out.values[0]
        assert white[0] == pytest.approx(0.25)

    def test_identical_income_tiebreak_partitions(self):
        spec = [(f"t{i}", 0.5, i % 2) for i in range(20)]
        rows, truth, geos = tract_rows(spec)
        income = IncomeTable(incomes={f"t{i}": 500.0 for i in range(20)})
        out = brier_by_income_decile(rows, truth, income, geos)
        assert len(out.decile_tracts) == 10
        assert sum(len(d) for d in out.decile_tracts) == 20
        flat = [g for d in out.decile_tracts for g in d]
        assert flat == sorted(flat)  # geo id order breaks the tie

    def test_single_tract_occupies_one_decile(self):
        rows, truth, geos = tract_rows([("only", 0.7, 1)] * 5)
        income = IncomeTable(incomes={"only": 100.0})
        out = brier_by_income_decile(rows, truth, income, geos)
        white = out.values[0]
        assert sum(1 for v in white if v is not None) == 1
        assert sum(1 for v in white if v is None) == 9

    def test_zero_relevant_race_decile_is_missing(self):
        rows, truth, geos = tract_rows([("a", 0.2, 0)] * 4)
        income = IncomeTable(incomes={"a": 100.0})
        out = brier_by_income_decile(rows, truth, income, geos, n_deciles=1)
        assert out.values[0][0] is None  # no white voters anywhere
        assert out.values[-1][0] is not None  # 'other' voters exist

    def test_overall_brier_decomposes_over_tracts(self, small_pop):
        from ebisg.posterior import batch_predict

        voters = small_pop.voters[:4000]
        preds = batch_predict(voters, Method.parse("bisg"), small_pop.tables)
        truth = {v.id: v.race for v in voters}
        geos = {v.id: v.geo for v in voters}
        tracts = tract_briers(preds, truth, small_pop.income, geos)
        n = sum(t.n_voters for t in tracts)
        for ri, race in enumerate(RACES):
            overall = brier_score(preds, truth, race)
            weighted = sum(t.brier[ri] * t.n_voters for t in tracts) / n
            assert overall == pytest.approx(weighted, abs=1e-12)

    def test_voter_mode_deciles(self):
        spec = [(f"t{i}", 0.5, 1) for i in range(10) for _ in range(i + 1)]
        rows, truth, geos = tract_rows(spec)
        income = IncomeTable(incomes={f"t{i}": 100.0 + i for i in range(10)})
        out = brier_by_income_decile(rows, truth, income, geos, n_deciles=5, decile_mode="voters")
        assert sum(len(d) for d in out.decile_tracts) == 10

    def test_missing_income_rejected(self):
        rows, truth, geos = tract_rows([("a", 0.5, 1)])
        with pytest.raises(DataError):
            brier_by_income_decile(rows, truth, IncomeTable(incomes={"b": 1.0}), geos)


class TestCalibration:
    def test_statistically_calibrated_stream(self):
        rng = np.random.default_rng(123)
        n = 100_000
        p = rng.random(n)
        y = rng.random(n) < p
        rows = preds_from(p)
        truth = truth_from(y.astype(int))
        table = calibration_table(rows, truth, "white")
        for b in table.bins:
            if b.count >= 100:
                se = np.sqrt(b.mean_predicted * (1 - b.mean_predicted) / b.count)
                assert abs(b.mean_predicted - b.observed_frequency) < 3 * se + 1e-9

    def test_all_zero_predictions(self):
        table = calibration_table(preds_from([0.0] * 5), truth_from([0] * 5), "white")
        assert table.bins[0].count == 5
        assert table.bins[0].observed_frequency == 0.0
        assert all(b.count == 0 for b in table.bins[1:])

    def test_empty_stratum(self):
        table = calibration_table([], {}, "white")
        assert table.total == 0
        assert len(table.bins) == 10

    def test_counts_conserved(self):
        rng = np.random.default_rng(5)
        rows = preds_from(rng.random(777))
        table = calibration_table(rows, truth_from(rng.integers(0, 2, 777)), "white")
        assert table.total == 777

    def test_final_bin_right_closed(self):
        table = calibration_table(preds_from([1.0, 0.95]), truth_from([1, 1]), "white")
        assert table.bins[-1].count == 2

    def test_bins_validated(self):
        with pytest.raises(ConfigError):
            calibration_table([], {}, "white", bins=1)


class TestTractMae:
    def test_single_tract_contribution(self):
        # mean posterior 0.50 vs true share 0.45 -> 5 points
        spec = [("a", 0.5, 1)] * 9 + [("a", 0.5, 0)] * 11
        rows, truth, geos = tract_rows(spec)
        rep = tract_mae(rows, truth, "white", geos, min_group=5)
        assert rep.mae_points == pytest.approx(5.0)
        assert rep.n_tracts == 1

    def test_mean_over_qualifying_tracts(self):
        spec = (
            [("a", 0.5, 1)] * 24 + [("a", 0.5, 0)] * 26  # share .48, err 2.0
            + [("b", 0.5, 1)] * 27 + [("b", 0.5, 0)] * 23  # share .54, err 4.0
        )
        rows, truth, geos = tract_rows(spec)
        rep = tract_mae(rows, truth, "white", geos, min_group=20)
        assert rep.mae_points == pytest.approx(3.0)

    def test_min_group_counts_relevant_race(self):
        spec = [("a", 0.5, 1)] * 10 + [("a", 0.5, 0)] * 100
        rows, truth, geos = tract_rows(spec)
        assert tract_mae(rows, truth, "white", geos, min_group=20).mae_points is None
        assert tract_mae(rows, truth, "white", geos, min_group=20, count_mode="total").mae_points is not None

    def test_no_qualifying_tract_reason(self):
        rows, truth, geos = tract_rows([("a", 0.5, 1)])
        rep = tract_mae(rows, truth, "white", geos, min_group=20)
        assert rep.mae_points is None
        assert "threshold" in rep.empty_reason


class TestMethodComparison:
    def test_single_method_bundle(self, small_pop, tmp_path):
        voters = small_pop.voters[:3000]
        truth = {v.id: v.race for v in voters}
        report = method_comparison(voters, truth, [Method.parse("bisg")], small_pop.tables)
        assert set(report.methods) == {"bisg"}
        res = report.methods["bisg"].strata["all"]
        assert res.n == 3000
        assert 0 <= res.mean_brier <= 1
        outdir = tmp_path / "bundle"
        write_report_bundle(report, outdir)
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert "bisg" in manifest["methods"]
        assert (outdir / "all" / "pr_bisg_white.csv").exists()
        assert (outdir / "all" / "calibration_bisg.csv").exists()
        assert (outdir / "all" / "brier_decile.csv").exists()
        assert (outdir / "all" / "mae.csv").exists()
        assert (outdir / "coverage.csv").exists()

    def test_empty_stratum_has_reason(self, small_pop):
        voters = [v for v in small_pop.voters[:2000] if v.last in small_pop.surnames.entries]
        truth = {v.id: v.race for v in voters}
        report = method_comparison(voters, truth, [Method.parse("bisg")], small_pop.tables, strata=("unmatched",))
        res = report.methods["bisg"].strata["unmatched"]
        assert res.n == 0
        assert res.empty_reason

    def test_method_failure_isolated(self, small_pop):
        voters = small_pop.voters[:500]
        truth = {v.id: v.race for v in voters}
        report = method_comparison(
            voters, truth,
            [Method.parse("bisg"), Method.parse("surname-embed")],  # no model loaded
            small_pop.tables, ModelSet(),
        )
        assert "bisg" in report.methods
        assert "surname-embed" in report.failures

    def test_methods_required(self, small_pop):
        with pytest.raises(ConfigError):
            method_comparison([], {}, [], small_pop.tables)
