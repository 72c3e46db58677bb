import json
from pathlib import Path

import pytest

from opminer.cli import main
from opminer.graphcore import loads_transactions
from opminer.modeldiff import save_model
from fixtures import FIXTURE_METAMODEL, fig_pair


@pytest.fixture()
def fig_files(tmp_path):
    old, new = fig_pair()
    old_path, new_path = tmp_path / "old.json", tmp_path / "new.json"
    save_model(old, old_path)
    save_model(new, new_path)
    mm_path = tmp_path / "mm.json"
    mm_path.write_text(json.dumps(FIXTURE_METAMODEL.to_json()), encoding="utf-8")
    return old_path, new_path, mm_path


class TestDiff:
    def test_identical_files(self, tmp_path, fig_files, capsys):
        old_path, _, _ = fig_files
        out = tmp_path / "scg.txt"
        code = main(["diff", str(old_path), str(old_path), "--out", str(out)])
        assert code == 0
        assert "components: 0" in capsys.readouterr().out
        assert out.read_text() == ""

    def test_fig_pair(self, tmp_path, fig_files, capsys):
        old_path, new_path, mm_path = fig_files
        out = tmp_path / "scg.txt"
        code = main(
            ["diff", str(old_path), str(new_path), "--out", str(out),
             "--metamodel", str(mm_path)]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "components: 1" in printed
        assert "created: 11" in printed
        assert "boundary: 2" in printed
        graphs = loads_transactions(out.read_text())
        assert len(graphs) == 1
        assert graphs[0].size == 13

    def test_malformed_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        out = tmp_path / "scg.txt"
        code = main(["diff", str(bad), str(bad), "--out", str(out)])
        assert code == 2
        assert "error:" in capsys.readouterr().err


@pytest.fixture()
def scg_file(tmp_path, fig_files):
    old_path, new_path, _ = fig_files
    out = tmp_path / "scg.txt"
    assert main(["diff", str(old_path), str(new_path), "--out", str(out)]) == 0
    # duplicate the single component into a 3-transaction db
    text = out.read_text()
    big = tmp_path / "db.txt"
    big.write_text(text + text + text, encoding="utf-8")
    return big


class TestMine:
    def test_fixed_threshold_finds_pattern(self, tmp_path, scg_file, capsys):
        ranked_path = tmp_path / "ranked.json"
        patterns_path = tmp_path / "patterns.json"
        code = main(
            ["mine", str(scg_file), "--out", str(ranked_path),
             "--patterns-out", str(patterns_path), "--threshold", "3"]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "threshold: 3 (fixed)" in printed
        doc = json.loads(ranked_path.read_text())
        assert doc["items"][0]["nodes"] == 6 and doc["items"][0]["edges"] == 7
        assert doc["items"][0]["support"] == 3
        pdoc = json.loads(patterns_path.read_text())
        assert pdoc["threshold"] == 3
        assert all("code" in p and "parents" in p for p in pdoc["patterns"])

    def test_relative_threshold_echoed(self, tmp_path, scg_file, capsys):
        out = tmp_path / "ranked.json"
        code = main(
            ["mine", str(scg_file), "--out", str(out), "--threshold", "0.4",
             "--relative"]
        )
        assert code == 0
        assert "threshold: 2 (relative 0.4 of 3)" in capsys.readouterr().out

    def test_empty_input(self, tmp_path, capsys):
        empty = tmp_path / "empty.txt"
        empty.write_text("", encoding="utf-8")
        out = tmp_path / "ranked.json"
        assert main(["mine", str(empty), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["items"] == []

    def test_budget_exceeded_exit_code(self, tmp_path, scg_file, monkeypatch):
        monkeypatch.setenv("OPMINER_TIME_BUDGET_S", "0.0")
        out = tmp_path / "ranked.json"
        code = main(["mine", str(scg_file), "--out", str(out), "--threshold", "3"])
        assert code == 3
        assert json.loads(out.read_text())["partial"] is True

    def test_idempotent_outputs(self, tmp_path, scg_file):
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        main(["mine", str(scg_file), "--out", str(out1), "--threshold", "3"])
        main(["mine", str(scg_file), "--out", str(out2), "--threshold", "3"])
        assert out1.read_bytes() == out2.read_bytes()


class TestRankAndRules:
    def test_rank_modes(self, tmp_path, scg_file):
        patterns_path = tmp_path / "patterns.json"
        main(
            ["mine", str(scg_file), "--out", str(tmp_path / "r.json"),
             "--patterns-out", str(patterns_path), "--threshold", "3"]
        )
        out = tmp_path / "freq.json"
        code = main(["rank", "--in", str(patterns_path), "--by", "frequency",
                     "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        supports = [i["support"] for i in doc["items"]]
        assert supports == sorted(supports, reverse=True)

    def test_rules_from_ranked(self, tmp_path, scg_file):
        ranked_path = tmp_path / "ranked.json"
        main(["mine", str(scg_file), "--out", str(ranked_path), "--threshold", "3"])
        rules_dir = tmp_path / "rules"
        code = main(["rules", "--in", str(ranked_path), "--out", str(rules_dir), "--dot"])
        assert code == 0
        top = json.loads((rules_dir / "rule_0001.json").read_text())
        assert len(top["contextNodes"]) == 2
        assert len(top["createdNodes"]) == 4
        assert len(top["createdEdges"]) == 7
        assert (rules_dir / "rule_0001.dot").exists()

    def test_rules_empty_input(self, tmp_path):
        doc = tmp_path / "empty.json"
        doc.write_text(json.dumps({"items": []}), encoding="utf-8")
        out_dir = tmp_path / "rules"
        assert main(["rules", "--in", str(doc), "--out", str(out_dir)]) == 0
        assert list(out_dir.iterdir()) == []

    def test_rules_bad_pattern_skipped(self, tmp_path, capsys):
        doc = {
            "items": [
                {"rank": 1, "graph": "t # 0\nv 0 unprefixed_label\n"},
                {"rank": 2, "graph": "t # 0\nv 0 create_Port\n"},
            ]
        }
        path = tmp_path / "doc.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        out_dir = tmp_path / "rules"
        code = main(["rules", "--in", str(path), "--out", str(out_dir)])
        assert code == 1
        assert (out_dir / "rule_0002.json").exists()
        assert not (out_dir / "rule_0001.json").exists()


class TestSimulateEvalReport:
    def test_simulate_writes_bundle(self, tmp_path, capsys):
        counts = {
            "Package": 5, "Component": 6, "SwImplementation": 3,
            "Port": 8, "Connector": 4, "Requirement": 5,
        }
        counts_path = tmp_path / "counts.json"
        counts_path.write_text(json.dumps(counts), encoding="utf-8")
        out = tmp_path / "bundle"
        code = main(
            ["simulate", "--d", "2", "--e", "1", "--p", "0.0", "--seed", "3",
             "--out", str(out), "--counts", str(counts_path)]
        )
        assert code == 0
        assert (out / "m0.json").exists() and (out / "m2.json").exists()
        assert (out / "truth" / "add_component_interface.txt").exists()

    def test_simulate_deterministic(self, tmp_path):
        counts_path = tmp_path / "counts.json"
        counts_path.write_text(
            json.dumps({"Package": 4, "Component": 5, "SwImplementation": 2,
                        "Port": 6, "Connector": 3, "Requirement": 4}),
            encoding="utf-8",
        )
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            main(["simulate", "--d", "1", "--e", "1", "--p", "0.5", "--seed", "7",
                  "--out", str(out), "--counts", str(counts_path)])
        for name in ("m0.json", "m1.json", "log.json", "config.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_eval_and_report(self, tmp_path, capsys):
        grid = {
            "d": [2], "e": [1], "p": [0.0], "seeds": [1],
            "threshold": {"mode": "fixed", "value": 2},
            "k": [1, 5],
            "initialCounts": {
                "Package": 5, "Component": 6, "SwImplementation": 3,
                "Port": 8, "Connector": 4, "Requirement": 5,
            },
        }
        grid_path = tmp_path / "grid.json"
        grid_path.write_text(json.dumps(grid), encoding="utf-8")
        out = tmp_path / "evalout"
        code = main(["eval", "--grid", str(grid_path), "--out", str(out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "MAP@1" in printed and "[compression]" in printed
        assert (out / "report.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["map"]["compression"]["MAP@1"] == 1.0

        code = main(["report", "--in", str(out)])
        assert code == 0
        assert "MAP@1" in capsys.readouterr().out


class TestStageHandoffMatchesRunGrid:
    def test_chained_stages_reproduce_grid_cell(self, tmp_path):
        from opminer.evalharness import GridSpec, ThresholdSpec, run_grid

        counts = {
            "Package": 5, "Component": 6, "SwImplementation": 3,
            "Port": 8, "Connector": 4, "Requirement": 5,
        }
        spec = GridSpec(
            d_values=(2,), e_values=(2,), p_values=(0.0,), seeds=(9,),
            threshold=ThresholdSpec("fixed", 2), ks=(1, 5),
            initial_counts=counts,
        )
        grid_rows = run_grid(spec).rows
        by_mode = {r["mode"]: r for r in grid_rows}

        counts_path = tmp_path / "counts.json"
        counts_path.write_text(json.dumps(counts), encoding="utf-8")
        bundle_dir = tmp_path / "bundle"
        assert main(["simulate", "--d", "2", "--e", "2", "--p", "0.0",
                     "--seed", "9", "--out", str(bundle_dir),
                     "--counts", str(counts_path)]) == 0
        scg_files = []
        for i in range(2):
            scg = tmp_path / f"scg_{i}.txt"
            assert main(["diff", str(bundle_dir / f"m{i}.json"),
                         str(bundle_dir / f"m{i+1}.json"), "--out", str(scg)]) == 0
            scg_files.append(str(scg))
        ranked_path = tmp_path / "ranked.json"
        assert main(["mine", *scg_files, "--out", str(ranked_path),
                     "--threshold", "2"]) == 0
        doc = json.loads(ranked_path.read_text())

        from opminer.graphcore import canonical_code, loads_transactions
        from opminer.simgen import load_bundle

        truth = load_bundle(bundle_dir).truth["add_component_interface"]
        truth_code = canonical_code(truth).text
        rank_of_truth = None
        for item in doc["items"]:
            (g,) = loads_transactions(item["graph"])
            if canonical_code(g).text == truth_code:
                rank_of_truth = item["rank"]
                break
        assert rank_of_truth == by_mode["compression"]["rank_truth_1"]
