import json

import pytest

from ltlnav.buchi import BuchiAutomaton
from ltlnav.cli import main

F_A_DOT = """\
digraph buchi {
  rankdir=LR;
  node [shape=circle];
  __init [shape=point, label=""];
  __init -> q0;
  q0 [shape=circle];
  q1 [shape=doublecircle];
  q0 -> q0 [label="!a"];
  q0 -> q1 [label="a"];
  q1 -> q1 [label="true"];
}"""


def write_train_config(tmp_path, seed=3):
    cfg = {
        "env": {"env": "letterworld", "grid_size": 5,
                "letters": list("abcd"), "copies_per_letter": 2,
                "max_steps": 30},
        "trainer": {"total_interactions": 128, "n_per_iter": 64,
                    "minibatch": 32, "epochs": 1, "workers": 2, "seed": seed,
                    "actor_hidden": [16], "value_hidden": [16]},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


def train_checkpoint(tmp_path):
    cfg = write_train_config(tmp_path)
    ckpt = tmp_path / "ckpt.json"
    code = main(["train", "--config", str(cfg), "--checkpoint", str(ckpt)])
    assert code == 0
    return ckpt


class TestCompile:
    def test_golden_dot_and_json(self, tmp_path, capsys):
        dot = tmp_path / "fa.dot"
        aut_json = tmp_path / "fa.json"
        code = main(["compile", "F a", "--dot", str(dot),
                     "--json", str(aut_json)])
        assert code == 0
        assert dot.read_text().strip() == F_A_DOT
        loaded = BuchiAutomaton.from_json(json.loads(aut_json.read_text()))
        assert loaded.n_states == 2
        summary = json.loads(capsys.readouterr().out)
        assert summary["states"] == 2
        assert summary["initial_subgoals"] == [
            {"state": 0, "reach": ["a"], "avoid": []}]

    def test_parse_error_exit_2(self, capsys):
        assert main(["compile", "(a &"]) == 2
        assert "expected" in capsys.readouterr().err

    def test_nested_formula_compiles(self, capsys):
        spec = "(!a) U (b & ((!c) U (d & ((!e) U f))))"
        assert main(["compile", spec]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["states"] >= 4

    def test_spec_from_file(self, tmp_path, capsys):
        path = tmp_path / "spec.ltl"
        path.write_text("# reach a\nF a\n")
        assert main(["compile", str(path)]) == 0
        assert json.loads(capsys.readouterr().out)["formula"] == "F a"

    def test_props_flag_orders_alphabet(self, capsys):
        assert main(["compile", "F a", "--props", "z,a"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["props"] == ["z", "a"]


class TestInspectSubgoals:
    def test_per_state_listing(self, capsys):
        assert main(["inspect-subgoals", "(!a) U b"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["subgoals"]["0"] == [
            {"state": 0, "reach": ["b"], "avoid": [["a"]]}]

    def test_out_file(self, tmp_path, capsys):
        out = tmp_path / "subs.json"
        assert main(["inspect-subgoals", "F a", "--out", str(out)]) == 0
        capsys.readouterr()
        assert json.loads(out.read_text())["formula"] == "F a"


class TestTrain:
    def test_writes_artifacts_and_preserves_config(self, tmp_path, capsys):
        cfg = write_train_config(tmp_path)
        before = cfg.read_bytes()
        ckpt = tmp_path / "out" / "ckpt.json"
        log = tmp_path / "out" / "log.jsonl"
        code = main(["train", "--config", str(cfg), "--checkpoint", str(ckpt),
                     "--log", str(log)])
        assert code == 0
        assert cfg.read_bytes() == before
        saved = json.loads(ckpt.read_text())
        assert saved["version"] == 1
        records = [json.loads(x)
                   for x in log.read_text().strip().split("\n")]
        assert len(records) == 2
        summary = json.loads(capsys.readouterr().out)
        assert summary["iterations"] == 2
        assert summary["final"]["iter"] == 2

    def test_idempotent_given_same_seed(self, tmp_path, capsys):
        cfg = write_train_config(tmp_path)
        blobs = []
        for name in ("a.json", "b.json"):
            ckpt = tmp_path / name
            assert main(["train", "--config", str(cfg),
                         "--checkpoint", str(ckpt)]) == 0
            blobs.append(ckpt.read_bytes())
        capsys.readouterr()
        assert blobs[0] == blobs[1]

    def test_seed_precedence(self, tmp_path, capsys, monkeypatch):
        cfg = write_train_config(tmp_path, seed=3)

        def run(name, *extra):
            ckpt = tmp_path / name
            assert main(["train", "--config", str(cfg),
                         "--checkpoint", str(ckpt), *extra]) == 0
            return ckpt.read_bytes()

        base = run("base.json")
        monkeypatch.setenv("GENZ_SEED", "9")
        env_run = run("env.json")
        flag_run = run("flag.json", "--seed", "3")
        monkeypatch.delenv("GENZ_SEED")
        capsys.readouterr()
        assert env_run != base          # env var overrides the config seed
        assert flag_run == base         # explicit flag beats the env var

    def test_unknown_config_key_exit_4(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"env": {}, "optimizer": "sgd"}))
        assert main(["train", "--config", str(path)]) == 4
        assert "unknown" in capsys.readouterr().err

    def test_malformed_json_exit_4(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["train", "--config", str(path)]) == 4
        capsys.readouterr()

    def test_missing_config_exit_4(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "nope.json")]) == 4
        capsys.readouterr()


class TestEval:
    def test_report_and_idempotence(self, tmp_path, capsys):
        ckpt = train_checkpoint(tmp_path)
        out = tmp_path / "report.json"
        argv = ["eval", "--spec", "F a", "--checkpoint", str(ckpt),
                "--n", "2", "--seeds", "2", "--out", str(out)]
        assert main(argv) == 0
        first = out.read_bytes()
        payload = json.loads(first)
        assert len(payload) == 1
        rep = payload[0]
        assert rep["spec"] == "F a"
        assert rep["eta_s"] + rep["eta_v"] + rep["eta_o"] == 1.0
        assert rep["seeds"] == [0, 1] and rep["n"] == 2
        assert main(argv) == 0
        capsys.readouterr()
        assert out.read_bytes() == first

    def test_spec_file_multiple_formulas(self, tmp_path, capsys):
        ckpt = train_checkpoint(tmp_path)
        capsys.readouterr()
        specs = tmp_path / "specs.ltl"
        specs.write_text("F a\nF b\n")
        assert main(["eval", "--spec", str(specs), "--checkpoint", str(ckpt),
                     "--n", "1", "--seeds", "1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert [r["spec"] for r in payload] == ["F a", "F b"]

    def test_parse_error_exit_2(self, tmp_path, capsys):
        ckpt = train_checkpoint(tmp_path)
        assert main(["eval", "--spec", "F (", "--checkpoint",
                     str(ckpt)]) == 2
        capsys.readouterr()

    def test_missing_checkpoint_exit_4(self, tmp_path, capsys):
        assert main(["eval", "--spec", "F a", "--checkpoint",
                     str(tmp_path / "nope.json")]) == 4
        capsys.readouterr()

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["eval"])
        assert err.value.code == 2


class TestTrace:
    def test_jsonl_svg_and_idempotence(self, tmp_path, capsys):
        ckpt = train_checkpoint(tmp_path)
        out = tmp_path / "trace.jsonl"
        svg = tmp_path / "trace.svg"
        argv = ["trace", "--spec", "F a", "--checkpoint", str(ckpt),
                "--n", "2", "--seed", "0", "--out", str(out),
                "--svg", str(svg)]
        assert main(argv) == 0
        lines = out.read_text().strip().split("\n")
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert rec["status"] in ("success", "violation", "other")
        assert len(rec["positions"]) == rec["steps"] + 1
        assert rec["switches"][0]["t"] == 0
        svg_text = svg.read_text()
        assert svg_text.startswith("<svg")
        assert "<polyline" in svg_text and "<text" in svg_text
        first = (out.read_bytes(), svg.read_bytes())
        assert main(argv) == 0
        capsys.readouterr()
        assert (out.read_bytes(), svg.read_bytes()) == first

    def test_stdout_when_no_out(self, tmp_path, capsys):
        ckpt = train_checkpoint(tmp_path)
        assert main(["trace", "--spec", "F a", "--checkpoint", str(ckpt),
                     "--seed", "1"]) == 0
        line = capsys.readouterr().out.strip().split("\n")[-1]
        assert json.loads(line)["episode"] == 0
