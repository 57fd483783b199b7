import csv
import hashlib
import json

import numpy as np
import pytest

from stratlasso.cli import load_model_file, main, parse_config
from stratlasso.core import DataConfig, assemble, make_folds
from stratlasso.dataio import read_dataset, write_dataset
from stratlasso.errors import InvalidConfig
from stratlasso.pretrained import fit_pretrained


def write_cfg(path, **keys):
    path.write_text("".join(f"{k.replace('__', '.')} = {v}\n" for k, v in keys.items()))
    return str(path)


@pytest.fixture(scope="module")
def transfer_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("transfer")
    cfg = write_cfg(root / "synth.cfg", synth__preset="transfer", synth__seed=3)
    assert main(["synth", "--config", cfg, "--out", str(root / "syn")]) == 0
    fit = write_cfg(root / "fit.cfg", data__train="syn/train.csv",
                    data__schema="syn/schema.txt", cv__seed=1)
    assert main(["fit", "--config", fit, "--model", "lasso", "--data-config", "group:MIN",
                 "--out", str(root / "lasso")]) == 0
    assert main(["fit", "--config", fit, "--model", "ptlasso", "--alpha", "1",
                 "--out", str(root / "pt")]) == 0
    return root


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_parse(self):
        cfg = parse_config("# c\n\na.b = 1\n c.d=x y \n")
        assert cfg == {"a.b": "1", "c.d": "x y"}

    @pytest.mark.parametrize("text", ["a.b = 1\na.b = 2\n", "novalue\n", "nodot = 3\n"])
    def test_bad(self, text):
        with pytest.raises(InvalidConfig):
            parse_config(text)

    def test_unknown_key_exit_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", synth__preset="null", synth__colour="red")
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "synth.colour" in capsys.readouterr().err

    def test_bad_preset_exit_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", synth__preset="bogus")
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_bad_threads(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", synth__preset="null")
        assert main(["synth", "--config", cfg, "--threads", "0", "--out", str(tmp_path)]) == 2

    def test_alpha_out_of_range(self, transfer_dir, tmp_path):
        assert main(["fit", "--config", str(transfer_dir / "fit.cfg"), "--model", "ptlasso",
                     "--alpha", "1.5", "--out", str(tmp_path)]) == 2


class TestSynth:
    def test_round_trip(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", synth__preset="null", synth__seed=4)
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        out = tmp_path / "o"
        full = read_dataset(out / "data.csv", out / "schema.txt")
        train = read_dataset(out / "train.csv", out / "schema.txt")
        test = read_dataset(out / "test.csv", out / "schema.txt")
        assert train.n + test.n == full.n
        stacked = np.vstack([train.X, test.X])
        assert sorted(map(tuple, stacked)) == sorted(map(tuple, full.X))
        write_dataset(full, tmp_path / "again.csv")
        assert (tmp_path / "again.csv").read_bytes() == (out / "data.csv").read_bytes()

    def test_byte_identical(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", synth__preset="transfer", synth__seed=9)
        for name in ("a", "b"):
            assert main(["synth", "--config", cfg, "--out", str(tmp_path / name)]) == 0
        for f in ("data.csv", "schema.txt", "truth.csv", "train.csv", "test.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_manifest(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", synth__preset="null")
        assert main(["synth", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "o")]) == 0
        man = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert man["config_sha256"] == hashlib.sha256((tmp_path / "c.cfg").read_bytes()).hexdigest()
        assert man["seed"] == 5 and man["command"] == "synth"
        assert "train.csv" in man["outputs"]


class TestFit:
    def test_outputs(self, transfer_dir):
        doc = json.loads((transfer_dir / "lasso" / "model.json").read_text())
        assert doc["method"] == "lasso" and doc["data_label"] == "MIN"
        assert (transfer_dir / "pt" / "cv_MIN.csv").is_file()
        man = json.loads((transfer_dir / "pt" / "manifest.json").read_text())
        assert man["config"]["ptlasso.alpha"] == "1.0"

    def test_ptlasso_alpha_one_matches_group_lasso(self, transfer_dir):
        syn = transfer_dir / "syn"
        test = read_dataset(syn / "test.csv", syn / "schema.txt")
        rows = test.group == "MIN"
        _, pt = load_model_file(transfer_dir / "pt" / "model.json")
        _, lasso = load_model_file(transfer_dir / "lasso" / "model.json")
        np.testing.assert_allclose(pt.predict_proba(test.X[rows], test.group[rows]),
                                   lasso.predict_proba(test.X[rows]), atol=1e-6)

    def test_ptlasso_alpha_one_matches_library(self, transfer_dir):
        syn = transfer_dir / "syn"
        train = assemble(read_dataset(syn / "train.csv", syn / "schema.txt"),
                         DataConfig.parse("all"))
        lib = fit_pretrained(train, make_folds(train, 3, 1), alpha=1.0)
        test = read_dataset(syn / "test.csv", syn / "schema.txt")
        _, cli_model = load_model_file(transfer_dir / "pt" / "model.json")
        np.testing.assert_allclose(cli_model.predict_proba(test.X, test.group),
                                   lib.predict_proba(test.X, test.group), atol=1e-6)

    def test_degenerate_stratum_exit_3(self, transfer_dir, tmp_path, capsys):
        syn = transfer_dir / "syn"
        ds = read_dataset(syn / "train.csv", syn / "schema.txt")
        ds.y[ds.group == "MIN"] = 0
        write_dataset(ds, tmp_path / "d.csv")
        cfg = write_cfg(tmp_path / "f.cfg", data__train="d.csv",
                        data__schema=str(syn / "schema.txt"))
        assert main(["fit", "--config", cfg, "--model", "lasso", "--data-config", "group:MIN",
                     "--out", str(tmp_path / "o")]) == 3
        assert "data error" in capsys.readouterr().err

    def test_missing_train_file_exit_3(self, tmp_path):
        cfg = write_cfg(tmp_path / "f.cfg", data__train="nope.csv", data__schema="nope.txt")
        assert main(["fit", "--config", cfg, "--model", "lasso", "--out", str(tmp_path)]) == 3

    def test_glinternet(self, tmp_path):
        cfg = write_cfg(tmp_path / "s.cfg", synth__preset="interaction")
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "syn")]) == 0
        fit = write_cfg(tmp_path / "f.cfg", data__train="syn/train.csv",
                        data__schema="syn/schema.txt")
        assert main(["fit", "--config", fit, "--model", "glinternet",
                     "--out", str(tmp_path / "gl")]) == 0
        net = read_rows(tmp_path / "gl" / "network.csv")
        assert (net[0]["candidate"], net[0]["partner"]) == ("x1", "x2")
        stats = read_rows(tmp_path / "gl" / "path_statistics.csv")
        assert int(stats[0]["n_main_effects"]) == 0


@pytest.fixture(scope="module")
def evaluated(transfer_dir):
    cfg = write_cfg(transfer_dir / "eval.cfg", data__test="syn/test.csv",
                    data__schema="syn/schema.txt", eval__baseline="lasso/model.json",
                    eval__models="pt/model.json", eval__target_group="MAJ")
    assert main(["eval", "--config", cfg, "--out", str(transfer_dir / "ev")]) == 0
    return transfer_dir / "ev"


class TestEvalReport:
    def test_eval_files(self, evaluated):
        assert (evaluated / "roc_lasso_MIN_y.csv").is_file()
        rows = read_rows(evaluated / "scores.csv")
        assert {r["method"] for r in rows} == {"lasso", "ptlasso"}
        compare = read_rows(evaluated / "compare.csv")
        assert {r["metric"] for r in compare} == {"p_value", "delta_auc"}
        assert "trained on data MIN" in (evaluated / "report.txt").read_text()

    def test_self_comparison(self, transfer_dir, evaluated, tmp_path):
        # same scores under another method name
        rows = read_rows(evaluated / "scores.csv")
        with open(tmp_path / "copy.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                if r["method"] == "lasso":
                    w.writerow(r)
                    w.writerow({**r, "method": "copy"})
        cfg = write_cfg(tmp_path / "r.cfg", report__scores=str(tmp_path / "copy.csv"))
        assert main(["report", "--config", cfg, "--out", str(tmp_path / "rep")]) == 0
        compare = {r["metric"]: r for r in read_rows(tmp_path / "rep" / "compare.csv")}
        assert float(compare["delta_auc"]["y"]) == 0.0
        assert float(compare["p_value"]["y"]) == 0.5

    def test_missing_baseline_exit_4(self, transfer_dir, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", data__test=str(transfer_dir / "syn/test.csv"),
                        data__schema=str(transfer_dir / "syn/schema.txt"),
                        eval__baseline=str(tmp_path / "absent.json"),
                        eval__target_group="MAJ")
        assert main(["eval", "--config", cfg, "--out", str(tmp_path / "o")]) == 4

    def test_report_duplicate_run_exit_4(self, evaluated, tmp_path):
        scores = str(evaluated / "scores.csv")
        cfg = write_cfg(tmp_path / "r.cfg", report__scores=f"{scores},{scores}")
        assert main(["report", "--config", cfg, "--out", str(tmp_path / "o")]) == 4

    def test_report_unpaired_exit_4(self, evaluated, tmp_path):
        rows = read_rows(evaluated / "scores.csv")
        with open(tmp_path / "bad.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for i, r in enumerate(rows):
                if r["method"] == "ptlasso":
                    r = {**r, "data": "MIN", "row": str(int(r["row"]) + (i == len(rows) - 1))}
                w.writerow(r)
        cfg = write_cfg(tmp_path / "r.cfg", report__scores=str(tmp_path / "bad.csv"))
        assert main(["report", "--config", cfg, "--out", str(tmp_path / "o")]) == 4

    def test_manifest_digest(self, transfer_dir, evaluated):
        man = json.loads((evaluated / "manifest.json").read_text())
        raw = (transfer_dir / "eval.cfg").read_bytes()
        assert man["command"] == "eval"
        assert man["config_sha256"] == hashlib.sha256(raw).hexdigest()
