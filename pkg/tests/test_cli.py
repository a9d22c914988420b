import csv
import json
import logging

import numpy as np
import pytest

from ecd.cli import main
from ecd.exprcore import ExpressionTree, Operator, const_node, op_node, var_node
from ecd.gpsr import GpConfig, Individual, model_document


@pytest.fixture(autouse=True)
def fresh_logging():
    # main() calls logging.basicConfig; drop handlers between tests so each
    # run binds to the stream pytest has installed for that test
    root = logging.getLogger()
    saved = root.handlers[:]
    for handler in saved:
        root.removeHandler(handler)
    yield
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    for handler in saved:
        root.addHandler(handler)


def write_csv(path, columns):
    names = list(columns)
    rows = zip(*(columns[name] for name in names))
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(names)
        writer.writerows(rows)


def write_model(path, tree, variables):
    doc = model_document(Individual(tree, fitness=0.0, raw_mse=0.0), variables, GpConfig())
    path.write_text(json.dumps(doc), encoding="utf-8")


def bcd_model(path):
    tree = ExpressionTree(
        op_node(
            Operator.ADD,
            var_node("B"),
            op_node(Operator.PDIV, var_node("C"), var_node("D")),
        )
    )
    write_model(path, tree, ["B", "C", "D"])
    return tree


def regression_csv(path, seed=0, n=40):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-3.0, 3.0, n)
    b = rng.uniform(1.0, 4.0, n)
    write_csv(path, {"A": a, "B": b, "Z": a + b})


SMALL_GP = {"gp": {"population_size": 80, "generations": 4}}


def write_config(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")


class TestGen:
    def test_writes_dataset_and_truth(self, tmp_path):
        out = tmp_path / "out"
        assert main(["gen", "--out", str(out), "--n", "50", "--seed", "3"]) == 0
        with open(out / "synthetic.csv", newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["A", "B", "C", "D", "Z"]
        assert len(rows) == 51
        truth = json.loads((out / "synthetic_truth.json").read_text())
        assert truth["response"] == "Z"
        assert truth["n"] == 50
        assert truth["seed"] == 3
        assert sorted(truth["equations"]) == ["A", "B", "C", "D", "Z"]

    def test_same_seed_same_bytes(self, tmp_path):
        argv = ["gen", "--n", "30", "--seed", "11"]
        assert main(argv + ["--out", str(tmp_path / "one")]) == 0
        assert main(argv + ["--out", str(tmp_path / "two")]) == 0
        one = (tmp_path / "one" / "synthetic.csv").read_bytes()
        two = (tmp_path / "two" / "synthetic.csv").read_bytes()
        assert one == two

    def test_stdout_mirrors_file(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["gen", "--out", str(out), "--n", "20", "--seed", "1", "--stdout"]) == 0
        captured = capsys.readouterr()
        assert captured.out == (out / "synthetic.csv").read_text()

    def test_invalid_n(self, tmp_path):
        assert main(["gen", "--out", str(tmp_path), "--n", "1"]) == 1


class TestFit:
    def test_csv_fit_writes_artifacts(self, tmp_path):
        data_path = tmp_path / "data.csv"
        regression_csv(data_path)
        cfg = tmp_path / "config.json"
        write_config(cfg, SMALL_GP)
        out = tmp_path / "out"
        code = main(
            [
                "fit", "--csv", str(data_path), "--response", "Z",
                "--predictors", "A,B", "--config", str(cfg),
                "--seed", "2", "--out", str(out),
            ]
        )
        assert code == 0
        for name in ("model.json", "history.csv", "expression.txt", "best_tree.dot"):
            assert (out / name).exists()
        doc = json.loads((out / "model.json").read_text())
        assert doc["variables"] == ["A", "B"]
        assert doc["seed"] == 2
        assert doc["config"]["population_size"] == 80
        assert doc["expression"] == (out / "expression.txt").read_text().strip()
        with open(out / "history.csv", newline="") as handle:
            header = next(csv.reader(handle))
        assert header == ["generation", "min_fitness", "mean_fitness", "diversity", "best_expression"]

    def test_rerun_is_byte_identical(self, tmp_path):
        data_path = tmp_path / "data.csv"
        regression_csv(data_path)
        cfg = tmp_path / "config.json"
        write_config(cfg, SMALL_GP)
        argv = [
            "fit", "--csv", str(data_path), "--response", "Z",
            "--predictors", "A,B", "--config", str(cfg), "--seed", "4",
        ]
        assert main(argv + ["--out", str(tmp_path / "one")]) == 0
        assert main(argv + ["--out", str(tmp_path / "two")]) == 0
        for name in ("model.json", "history.csv", "expression.txt"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_synth_fit(self, tmp_path, capsys):
        cfg = tmp_path / "config.json"
        write_config(cfg, SMALL_GP)
        out = tmp_path / "out"
        code = main(
            ["fit", "--synth", "--n", "40", "--seed", "1", "--config", str(cfg),
             "--out", str(out), "--stdout"]
        )
        assert code == 0
        printed = json.loads(capsys.readouterr().out)
        on_disk = json.loads((out / "model.json").read_text())
        assert printed == on_disk
        assert on_disk["variables"] == ["A", "B", "C", "D"]

    def test_config_seed_beaten_by_flag(self, tmp_path):
        data_path = tmp_path / "data.csv"
        regression_csv(data_path)
        cfg = tmp_path / "config.json"
        write_config(cfg, dict(SMALL_GP, seed=5))
        base = [
            "fit", "--csv", str(data_path), "--response", "Z",
            "--predictors", "A,B", "--config", str(cfg),
        ]
        assert main(base + ["--out", str(tmp_path / "one")]) == 0
        assert json.loads((tmp_path / "one" / "model.json").read_text())["seed"] == 5
        assert main(base + ["--seed", "7", "--out", str(tmp_path / "two")]) == 0
        assert json.loads((tmp_path / "two" / "model.json").read_text())["seed"] == 7

    def test_missing_csv(self, tmp_path):
        code = main(
            ["fit", "--csv", str(tmp_path / "nope.csv"), "--response", "Z",
             "--predictors", "A", "--out", str(tmp_path)]
        )
        assert code == 1

    def test_unknown_gp_field(self, tmp_path):
        data_path = tmp_path / "data.csv"
        regression_csv(data_path)
        cfg = tmp_path / "config.json"
        write_config(cfg, {"gp": {"popsize": 10}})
        code = main(
            ["fit", "--csv", str(data_path), "--response", "Z",
             "--predictors", "A,B", "--config", str(cfg), "--out", str(tmp_path)]
        )
        assert code == 1

    def test_conflicting_sources_in_config(self, tmp_path):
        cfg = tmp_path / "config.json"
        write_config(
            cfg,
            {"data": {"csv": "x.csv", "response": "Z", "predictors": ["A"]}, "synth": {"n": 10}},
        )
        assert main(["fit", "--config", str(cfg), "--out", str(tmp_path)]) == 1

    def test_no_source(self, tmp_path):
        assert main(["fit", "--out", str(tmp_path)]) == 1


def ris_fixture(tmp_path):
    model_path = tmp_path / "model.json"
    bcd_model(model_path)
    data_path = tmp_path / "data.csv"
    rng = np.random.default_rng(2)
    b = rng.uniform(1.0, 4.0, 30)
    c = rng.uniform(2.0, 6.0, 30)
    d = rng.uniform(3.0, 8.0, 30)
    write_csv(data_path, {"B": b, "C": c, "D": d, "Z": b + c / d})
    return model_path, data_path


class TestRis:
    def test_table_and_dot_artifacts(self, tmp_path, capsys):
        model_path, data_path = ris_fixture(tmp_path)
        out = tmp_path / "out"
        code = main(
            ["ris", "--model", str(model_path), "--csv", str(data_path),
             "--response", "Z", "--predictors", "B,C,D", "--out", str(out), "--stdout"]
        )
        assert code == 0
        text = (out / "impact_table.txt").read_text()
        assert capsys.readouterr().out == text
        assert text.splitlines()[1].startswith("Variable")
        doc = json.loads((out / "impact_table.json").read_text())
        assert [row["variable"] for row in doc["rows"]] == ["B", "C", "D"]
        for name in ("B", "C", "D"):
            for label in ("Q1", "Q2", "Q3"):
                assert (out / f"impact_{name}_{label}.dot").exists()

    def test_magnitude_flag_changes_table(self, tmp_path):
        model_path, data_path = ris_fixture(tmp_path)
        base = ["ris", "--model", str(model_path), "--csv", str(data_path),
                "--response", "Z", "--predictors", "B,C,D"]
        assert main(base + ["--out", str(tmp_path / "small"), "--magnitude", "0.01"]) == 0
        assert main(base + ["--out", str(tmp_path / "big"), "--magnitude", "0.5"]) == 0
        small = json.loads((tmp_path / "small" / "impact_table.json").read_text())
        big = json.loads((tmp_path / "big" / "impact_table.json").read_text())
        assert small["perturbation"]["magnitude"] == 0.01
        assert abs(big["rows"][0]["impacts"][0]) > abs(small["rows"][0]["impacts"][0])

    def test_data_missing_model_variable(self, tmp_path):
        model_path = tmp_path / "model.json"
        bcd_model(model_path)
        data_path = tmp_path / "data.csv"
        write_csv(data_path, {"B": [1.0, 2.0], "Z": [1.0, 2.0]})
        code = main(
            ["ris", "--model", str(model_path), "--csv", str(data_path),
             "--response", "Z", "--predictors", "B", "--out", str(tmp_path)]
        )
        assert code == 1


class TestCounterfactual:
    def test_derived_scenario(self, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        bcd_model(model_path)
        out = tmp_path / "out"
        code = main(
            ["counterfactual", "--model", str(model_path),
             "--at", "B=2", "--at", "C=3", "--at", "D=5",
             "--set", "D=6", "--out", str(out), "--stdout"]
        )
        assert code == 0
        text = capsys.readouterr().out
        assert "baseline output: 2.600" in text
        assert "perturbed output: 2.500" in text
        assert "impact: -0.100" in text
        assert "most changed internal nodes:" in text
        assert text == (out / "counterfactual.txt").read_text()
        doc = json.loads((out / "counterfactual.json").read_text())
        assert doc["variable"] == "D"
        assert doc["impact"] == pytest.approx(-0.1)
        assert (out / "counterfactual.dot").exists()

    def test_scenario_from_config(self, tmp_path):
        model_path = tmp_path / "model.json"
        bcd_model(model_path)
        cfg = tmp_path / "config.json"
        write_config(
            cfg,
            {
                "scenario": {"B": 2, "C": 3, "D": 5},
                "intervention": {"variable": "D", "mode": "set_to", "value": 6},
            },
        )
        out = tmp_path / "out"
        code = main(
            ["counterfactual", "--model", str(model_path), "--config", str(cfg),
             "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "counterfactual.json").read_text())
        assert doc["impact"] == pytest.approx(-0.1)

    def test_missing_scenario_or_intervention(self, tmp_path):
        model_path = tmp_path / "model.json"
        bcd_model(model_path)
        base = ["counterfactual", "--model", str(model_path), "--out", str(tmp_path)]
        assert main(base + ["--set", "D=6"]) == 1
        assert main(base + ["--at", "B=2", "--at", "C=3", "--at", "D=5"]) == 1
        assert main(base + ["--at", "B=2", "--set", "D"]) == 1

    def test_scenario_missing_tree_variable(self, tmp_path):
        model_path = tmp_path / "model.json"
        bcd_model(model_path)
        code = main(
            ["counterfactual", "--model", str(model_path),
             "--at", "B=2", "--set", "B=3", "--out", str(tmp_path)]
        )
        assert code == 1


class TestSimplify:
    def test_prunes_inert_subtree(self, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        tree = ExpressionTree(
            op_node(
                Operator.ADD,
                var_node("B"),
                op_node(Operator.MUL, const_node(0.0), var_node("X")),
            )
        )
        write_model(model_path, tree, ["B", "X"])
        data_path = tmp_path / "data.csv"
        write_csv(
            data_path,
            {"B": [1.0, 2.0, 3.0, 4.0], "X": [5.0, 6.0, 7.0, 8.0], "Z": [1.0, 2.0, 3.0, 4.0]},
        )
        out = tmp_path / "out"
        code = main(
            ["simplify", "--model", str(model_path), "--csv", str(data_path),
             "--response", "Z", "--predictors", "B,X", "--out", str(out), "--stdout"]
        )
        assert code == 0
        doc = json.loads((out / "simplified_model.json").read_text())
        assert doc["expression"] == "(B + 0)"
        assert doc["pruned_node_ids"] == [2]
        assert doc["simplified_from_size"] == 5
        assert json.loads(capsys.readouterr().out) == doc
        assert (out / "simplified_tree.dot").exists()

    def test_reactive_model_untouched(self, tmp_path):
        model_path, data_path = ris_fixture(tmp_path)
        out = tmp_path / "out"
        code = main(
            ["simplify", "--model", str(model_path), "--csv", str(data_path),
             "--response", "Z", "--predictors", "B,C,D", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "simplified_model.json").read_text())
        assert doc["pruned_node_ids"] == []
        assert doc["expression"] == "(B + (C / D))"

    def test_bad_model_file(self, tmp_path):
        model_path = tmp_path / "model.json"
        model_path.write_text("{\"variables\": [\"A\"]}", encoding="utf-8")
        data_path = tmp_path / "data.csv"
        write_csv(data_path, {"A": [1.0, 2.0], "Z": [1.0, 2.0]})
        code = main(
            ["simplify", "--model", str(model_path), "--csv", str(data_path),
             "--response", "Z", "--predictors", "A", "--out", str(tmp_path)]
        )
        assert code == 1

    def test_invalid_config_json(self, tmp_path):
        model_path = tmp_path / "model.json"
        bcd_model(model_path)
        cfg = tmp_path / "config.json"
        cfg.write_text("not json", encoding="utf-8")
        code = main(
            ["simplify", "--model", str(model_path), "--config", str(cfg),
             "--out", str(tmp_path)]
        )
        assert code == 1
