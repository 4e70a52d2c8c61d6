import json

import numpy as np
import pytest

from fuse_ensemble import cli
from fuse_ensemble.config import RunConfig
from fuse_ensemble.dataset import load_dataset
from fuse_ensemble.exceptions import ConfigError

SPEC = {"m": 5, "N": 20, "psi": [0.9, 0.8, 0.7, 0.65, 0.6], "eta": [0.85, 0.75, 0.7, 0.6, 0.6],
        "n_queries": 6, "b": -0.3, "b_spread": 0.3, "value_kind": "real", "seed": 3}


@pytest.fixture
def dataset(tmp_path):
    (tmp_path / "spec.json").write_text(json.dumps(SPEC))
    assert cli.main(["synth", str(tmp_path / "spec.json"), "--out", str(tmp_path / "d")]) == 0
    return ["--manifest", str(tmp_path / "d" / "manifest.json"),
            "--records", str(tmp_path / "d" / "records.jsonl")]


def _strip_labels(tmp_path, data, keep_labels=False):
    manifest, records = data[1], data[3]
    out = tmp_path / "stripped.jsonl"
    with open(records) as src, open(out, "w") as dst:
        for line in src:
            rec = json.loads(line)
            rec.pop("answer_key", None)
            if not keep_labels:
                rec.pop("label", None)
            dst.write(json.dumps(rec) + "\n")
    return ["--manifest", manifest, "--records", str(out)]


def _lines(path):
    return [json.loads(x) for x in path.read_text().splitlines()]


def test_synth_readable_and_deterministic(tmp_path, dataset):
    batch = load_dataset(dataset[1], dataset[3])
    assert len(batch) == 6 and batch.has_labels and batch.has_answer_keys
    again = tmp_path / "again"
    assert cli.main(["synth", str(tmp_path / "spec.json"), "--out", str(again)]) == 0
    for name in ("manifest.json", "records.jsonl"):
        assert (again / name).read_bytes() == (tmp_path / "d" / name).read_bytes()


def test_synth_bad_spec(tmp_path):
    bad = dict(SPEC, dependence={"groups": [[0, 1]], "rho": 1.5})
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert cli.main(["synth", str(tmp_path / "bad.json"), "--out", str(tmp_path / "x")]) == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert cli.main(["synth", str(tmp_path / "junk.json"), "--out", str(tmp_path / "x")]) == 2


def test_run_fuse_covers_every_query(tmp_path, dataset):
    out = tmp_path / "sel.jsonl"
    assert cli.main(["run", *dataset, "--methods", "fuse", "--output", str(out)]) == 0
    recs = _lines(out)
    assert [r["query_id"] for r in recs] == [f"q{i:04d}" for i in range(6)]
    assert all(r["method"] == "fuse" and r["selected"] for r in recs)
    assert all(len(r["selected_ids"]) == len(r["selected"]) for r in recs)


def test_run_modes_differ_but_complete(tmp_path, dataset):
    outs = {}
    for mode in ("query", "batched"):
        out = tmp_path / f"{mode}.jsonl"
        assert cli.main(["run", *dataset, "--methods", "fuse", "--mode", mode, "--scores",
                         "--output", str(out)]) == 0
        outs[mode] = out.read_bytes()
        assert len(_lines(out)) == 6
    assert outs["query"] != outs["batched"]


def test_run_all_methods(tmp_path, dataset):
    out = tmp_path / "all.jsonl"
    assert cli.main(["run", *dataset, "--output", str(out)]) == 0
    methods = {r["method"] for r in _lines(out)}
    assert methods == set(RunConfig().method_list)


def test_missing_answer_keys_skips_majority_vote(tmp_path, dataset, capsys):
    data = _strip_labels(tmp_path, dataset, keep_labels=True)
    out = tmp_path / "sel.jsonl"
    code = cli.main(["run", *data, "--methods", "fuse,majority_vote", "--output", str(out)])
    assert code == 4
    assert "skipping majority_vote" in capsys.readouterr().err
    assert {r["method"] for r in _lines(out)} == {"fuse"}


def test_eval_table_and_json(tmp_path, dataset, capsys):
    sel = tmp_path / "sel.jsonl"
    assert cli.main(["run", *dataset, "--methods", "fuse,naive_ensemble,pass1",
                     "--output", str(sel)]) == 0
    capsys.readouterr()
    report = tmp_path / "report.json"
    assert cli.main(["eval", *dataset, str(sel), "--ks", "1,3,N", "--json", str(report)]) == 0
    table = capsys.readouterr().out
    assert "fuse" in table and "pass@3" in table and "pass@N" in table
    data = json.loads(report.read_text())
    assert set(data["methods"]) == {"fuse", "naive_ensemble", "pass1"}
    m = data["methods"]["pass1"]
    # the random-selection rule scores exactly the mean correct fraction
    assert m["selection_accuracy"] == pytest.approx(m["pass_at_1"])


def test_eval_without_labels(tmp_path, dataset):
    data = _strip_labels(tmp_path, dataset)
    sel = tmp_path / "sel.jsonl"
    assert cli.main(["run", *data, "--methods", "fuse", "--output", str(sel)]) == 0
    assert cli.main(["eval", *data, str(sel)]) == 3


def test_eval_rejects_bad_selection_file(tmp_path, dataset):
    sel = tmp_path / "bad.jsonl"
    sel.write_text('{"method": "x", "query_id": "nope", "selected": [0]}\n')
    assert cli.main(["eval", *dataset, str(sel)]) == 3


def test_inspect_known_query(tmp_path, dataset):
    out = tmp_path / "inspect.json"
    assert cli.main(["inspect", *dataset, "q0002", "--out", str(out)]) == 0
    dump = json.loads(out.read_text())
    for key in ("mu", "u", "b_hat", "psi", "eta", "tci_trace", "p_hat_histogram",
                "thresholds", "weights", "fallback"):
        assert key in dump
    assert dump["query_id"] == "q0002" and dump["n_responses"] == 20
    if dump["fallback"] is None:
        assert len(dump["psi"]) == 5 and sum(dump["p_hat_histogram"]["counts"]) == 20


def test_inspect_unknown_query(dataset):
    assert cli.main(["inspect", *dataset, "q9999"]) == 3


def test_inspect_three_verifier_block(tmp_path):
    spec = dict(SPEC, m=3, psi=[0.9, 0.8, 0.7], eta=[0.85, 0.75, 0.7], n_queries=1)
    (tmp_path / "s.json").write_text(json.dumps(spec))
    assert cli.main(["synth", str(tmp_path / "s.json"), "--out", str(tmp_path / "d")]) == 0
    out = tmp_path / "i.json"
    data = ["--manifest", str(tmp_path / "d" / "manifest.json"),
            "--records", str(tmp_path / "d" / "records.jsonl")]
    assert cli.main(["inspect", *data, "q0000", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["tci_fallback"] is True


def test_bad_config_exit_code(tmp_path, dataset):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "sideways"}))
    assert cli.main(["run", *dataset, "--config", str(cfg)]) == 2
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert cli.main(["run", *dataset, "--config", str(cfg)]) == 2
    assert cli.main(["run", *dataset, "--methods", "nonsense"]) == 2
    assert cli.main(["run"]) == 2
    assert cli.main(["run", "--manifest", str(tmp_path / "none.json"),
                     "--records", str(tmp_path / "none.jsonl")]) == 3


def test_config_file_and_env_overrides(tmp_path, dataset, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "batched", "methods": ["fuse"]}))
    out = tmp_path / "env.jsonl"
    monkeypatch.setenv("FUSE_MANIFEST", dataset[1])
    monkeypatch.setenv("FUSE_RECORDS", dataset[3])
    monkeypatch.setenv("FUSE_OUTPUT", str(out))
    assert cli.main(["run", "--config", str(cfg)]) == 0
    direct = tmp_path / "direct.jsonl"
    monkeypatch.delenv("FUSE_OUTPUT")
    assert cli.main(["run", *dataset, "--mode", "batched", "--methods", "fuse",
                     "--output", str(direct)]) == 0
    assert out.read_bytes() == direct.read_bytes()


def test_run_config_defaults_and_hash():
    cfg = RunConfig()
    assert (cfg.mode, cfg.clip_delta, cfg.reg, cfg.max_sweeps, cfg.ks, cfg.seed) == (
        "query", 1e-3, 1e-3, 10, [1, 5, "N"], 0)
    assert not (cfg.pass1_literal or cfg.eq9_compat or cfg.tci_index_alt or cfg.global_norm)
    assert cfg.index_set == "below" and RunConfig(tci_index_alt=True).index_set == "exclude"
    assert cfg.hash() == RunConfig(workers=8, output="x").hash()
    assert cfg.hash() != RunConfig(reg=0.1).hash()
    with pytest.raises(ConfigError):
        RunConfig(ks=[0])
    env = cfg.with_env({"FUSE_MANIFEST": "m.json", "FUSE_REG": "9"})
    assert env.manifest == "m.json" and env.reg == 1e-3


def test_pass1_literal_flag(tmp_path, dataset):
    out = tmp_path / "p.jsonl"
    assert cli.main(["run", *dataset, "--methods", "pass1", "--pass1-literal",
                     "--output", str(out)]) == 0
    assert all(r["selected"] == [0] for r in _lines(out))


def test_scores_are_probabilities(tmp_path, dataset):
    out = tmp_path / "s.jsonl"
    assert cli.main(["run", *dataset, "--methods", "fuse", "--mode", "batched", "--scores",
                     "--output", str(out)]) == 0
    for rec in _lines(out):
        s = np.array(rec["scores"])
        assert s.shape == (20,) and np.all((s >= 0) & (s <= 1))
        # ranking uses the logit, so the selection sits inside the top-probability set
        assert set(rec["selected"]) <= set(np.flatnonzero(s == s.max()).tolist())
