"""CLI behavior: exit codes, determinism, manifests, config files."""

import json
from pathlib import Path

import pytest

from ebisg import load_embedding_store, load_weights
from ebisg.cli import main

NAME_HEADER = "name,count,white,black,hispanic,asian,aian,other\n"


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """A tiny generated population plus trained surname model, reused across tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-synth", "--seed", "5", "--n", "3000", "--out", str(root / "pop")]) == 0
    assert main([
        "train", "--variant", "surname", "--table", str(root / "pop" / "surnames.csv"),
        "--dim", "64", "--ngram-seed", "3", "--hidden", "32", "--epochs", "4",
        "--batch-size", "32", "--seed", "1", "--out", str(root / "model"),
    ]) == 0
    return root


def _files_equal(a: Path, b: Path, skip={"run_manifest.json"}):
    names_a = sorted(p.name for p in a.iterdir() if p.name not in skip)
    names_b = sorted(p.name for p in b.iterdir() if p.name not in skip)
    assert names_a == names_b
    for name in names_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, tmp_path):
        assert main(["gen-synth", "--n", "10", "--out", str(tmp_path / "x"), "--bogus"]) == 2

    def test_missing_weights_flag_names_it(self, tmp_path, capsys, pipeline_dir):
        pop = pipeline_dir / "pop"
        rc = main([
            "predict", "--voters", str(pop / "voters.csv"), "--surnames", str(pop / "surnames.csv"),
            "--geo", str(pop / "geo.csv"), "--method", "fullname-embed", "--out", str(tmp_path / "o"),
        ])
        assert rc == 2
        assert "--fullname-weights" in capsys.readouterr().err

    def test_data_error_is_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text(NAME_HEADER + "x,notanint,1,0,0,0,0,0\n")
        rc = main(["ingest", "--surnames", str(bad), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "notanint" in capsys.readouterr().err

    def test_missing_file_is_exit_1(self, tmp_path):
        rc = main(["ingest", "--surnames", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")])
        assert rc == 1


class TestGenSynth:
    def test_two_runs_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["gen-synth", "--seed", "7", "--n", "2000", "--out", str(out)]) == 0
        _files_equal(a, b)

    def test_run_manifest_written(self, tmp_path):
        out = tmp_path / "p"
        assert main(["gen-synth", "--seed", "7", "--n", "500", "--out", str(out)]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["command"] == "gen-synth"
        assert manifest["seed"] == 7
        assert "started" in manifest and "finished" in manifest

    def test_inputs_unmodified(self, pipeline_dir, tmp_path):
        pop = pipeline_dir / "pop"
        before = (pop / "voters.csv").read_bytes()
        assert main([
            "ingest", "--surnames", str(pop / "surnames.csv"), "--voters", str(pop / "voters.csv"),
            "--out", str(tmp_path / "o"),
        ]) == 0
        assert (pop / "voters.csv").read_bytes() == before


class TestIngest:
    def test_summary_and_coverage(self, pipeline_dir, tmp_path):
        pop = pipeline_dir / "pop"
        out = tmp_path / "summary"
        rc = main([
            "ingest",
            "--surnames", str(pop / "surnames.csv"),
            "--firstnames", str(pop / "firstnames.csv"),
            "--geo", str(pop / "geo.csv"),
            "--income", str(pop / "income.csv"),
            "--voters", str(pop / "voters.csv"),
            "--out", str(out),
        ])
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["voters"]["records"] == 3000
        assert "coverage" in summary
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert len(manifest["input_digests"]) == 5

    def test_requires_some_input(self, tmp_path):
        assert main(["ingest", "--out", str(tmp_path / "o")]) == 2


class TestEmbed:
    def test_store_from_name_list(self, tmp_path):
        names = tmp_path / "names.txt"
        names.write_text("garcia\nGARCIA\nnguyen\n\n")
        out = tmp_path / "s"
        assert main(["embed", "--names", str(names), "--dim", "32", "--out", str(out)]) == 0
        store = load_embedding_store(out / "store.ebed")
        assert set(store.names()) == {"GARCIA", "NGUYEN"}
        assert store.dim == 32

    def test_exactly_one_source_required(self, tmp_path):
        assert main(["embed", "--out", str(tmp_path / "o")]) == 2

    def test_empty_list_is_data_error(self, tmp_path):
        names = tmp_path / "names.txt"
        names.write_text("\n\n")
        assert main(["embed", "--names", str(names), "--out", str(tmp_path / "o")]) == 1


class TestTrainPredictEvaluate:
    def test_model_metadata(self, pipeline_dir):
        w = load_weights(pipeline_dir / "model" / "model.emlp")
        assert w.arch.hidden_layers == (32,)
        assert w.provenance.startswith("char-ngram(dim=64,seed=3")
        report = json.loads((pipeline_dir / "model" / "train_report.json").read_text())
        assert report["variant"] == "surname"
        assert report["validation_cross_entropy"] > 0

    def test_predict_writes_rows_for_all_voters(self, pipeline_dir, tmp_path):
        pop = pipeline_dir / "pop"
        out = tmp_path / "pred"
        rc = main([
            "predict", "--voters", str(pop / "voters.csv"), "--surnames", str(pop / "surnames.csv"),
            "--geo", str(pop / "geo.csv"), "--method", "surname-embed",
            "--surname-weights", str(pipeline_dir / "model" / "model.emlp"),
            "--out", str(out),
        ])
        assert rc == 0
        lines = (out / "predictions.csv").read_text().strip().splitlines()
        assert len(lines) == 3001  # header + one row per voter

    def test_evaluate_bundle(self, pipeline_dir, tmp_path):
        pop = pipeline_dir / "pop"
        out = tmp_path / "report"
        rc = main([
            "evaluate", "--voters", str(pop / "voters.csv"), "--truth", str(pop / "truth.csv"),
            "--surnames", str(pop / "surnames.csv"), "--firstnames", str(pop / "firstnames.csv"),
            "--geo", str(pop / "geo.csv"), "--income", str(pop / "income.csv"),
            "--methods", "bisg,bifsg", "--out", str(out),
        ])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["methods"]) == {"bisg", "bifsg"}
        for stratum in ("all", "matched", "unmatched"):
            assert (out / stratum / "pr_bisg_white.csv").exists()
            assert manifest["methods"]["bisg"][stratum]["n"] == manifest["stratum_sizes"][stratum]

    def test_train_fullname_requires_voters(self, tmp_path):
        rc = main(["train", "--variant", "fullname", "--out", str(tmp_path / "o")])
        assert rc == 2


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("# defaults\nseed = 42\nn = 100\n")
        out1 = tmp_path / "a"
        assert main(["gen-synth", "--config", str(cfg), "--out", str(out1)]) == 0
        man = json.loads((out1 / "run_manifest.json").read_text())
        assert man["seed"] == 42 and man["config"]["n"] == 100
        out2 = tmp_path / "b"
        assert main(["gen-synth", "--config", str(cfg), "--seed", "9", "--out", str(out2)]) == 0
        assert json.loads((out2 / "run_manifest.json").read_text())["seed"] == 9

    def test_missing_config_file(self, tmp_path):
        assert main(["gen-synth", "--config", str(tmp_path / "nope"), "--n", "5", "--out", str(tmp_path / "o")]) == 1

    def test_digest_changes_with_input(self, pipeline_dir, tmp_path):
        pop = pipeline_dir / "pop"
        out1, out2 = tmp_path / "m1", tmp_path / "m2"
        surnames = pop / "surnames.csv"
        assert main(["ingest", "--surnames", str(surnames), "--out", str(out1)]) == 0
        modified = tmp_path / "surnames2.csv"
        modified.write_text(surnames.read_text() + "zzznew,150,1,0,0,0,0,0\n")
        assert main(["ingest", "--surnames", str(modified), "--out", str(out2)]) == 0
        d1 = json.loads((out1 / "run_manifest.json").read_text())["input_digests"]
        d2 = json.loads((out2 / "run_manifest.json").read_text())["input_digests"]
        assert list(d1.values())[0] != list(d2.values())[0]
