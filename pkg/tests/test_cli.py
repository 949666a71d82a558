import json
from pathlib import Path

import pytest
import yaml

from knnrank.cli import main

DATA = Path(__file__).parent / "data"


def _config(tmp_path, **sections):
    base = {"paths": {"corpus": str(DATA / "sample_corpus.tsv"), "work_dir": str(tmp_path / "work")}}
    for name, values in sections.items():
        base.setdefault(name, {}).update(values)
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(base))
    return str(p)


def test_ingest_sample_corpus(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["ingest", "-c", cfg]) == 0
    out = capsys.readouterr().out
    assert "D=3" in out
    assert (tmp_path / "work" / "answers.lemma.fwd").exists()
    assert (tmp_path / "work" / "answers.original.fwd").exists()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["ingest", "-c", cfg, "--set", "model.b=2"]) == 2
    assert "model.b" in capsys.readouterr().err
    assert not (tmp_path / "work").exists()


def test_data_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("p1\ttran\tonly three fields\n")
    cfg = _config(tmp_path, paths={"corpus": str(bad)})
    assert main(["ingest", "-c", cfg]) == 3
    assert "expected 4" in capsys.readouterr().err
    assert not (tmp_path / "work").exists()


def test_query_with_unknown_index(tmp_path, capsys):
    cfg = _config(tmp_path, pipeline={"eval_split": "test"})
    assert main(["ingest", "-c", cfg]) == 0
    rc = main(["query", "-c", cfg, "--set", f"paths.index={tmp_path / 'nope.knn'}"])
    assert rc != 0
    assert "paths.index" in capsys.readouterr().err
    assert not list((tmp_path / "work").glob("run.*"))


def test_index_built_for_other_settings_is_refused(tmp_path, capsys):
    cfg = _config(tmp_path, pipeline={"eval_split": "test"})
    assert main(["ingest", "-c", cfg]) == 0
    assert main(["build-index", "-c", cfg]) == 0
    assert main(["query", "-c", cfg, "--set", "model.k1=2.0"]) == 3
    assert "k1" in capsys.readouterr().err
    assert main(["query", "-c", cfg]) == 0
    assert (tmp_path / "work" / "run.test.tsv").exists()


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    d = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--pairs", "400", "--seed", "1", "--out", str(d / "qa.tsv")]) == 0
    return d


def test_eval_knn_exhaustive_breadth(generated, tmp_path, capsys):
    cfg = _config(tmp_path, paths={"corpus": str(generated / "qa.tsv")},
                  index={"method": "swgraph", "nn": 5, "ef_construction": 20},
                  pipeline={"eval_split": "test"}, model={"field": "original"})
    assert main(["ingest", "-c", cfg]) == 0
    assert main(["build-index", "-c", cfg]) == 0
    assert main(["eval-knn", "-c", cfg, "--set", "index.ef_search=400"]) == 0
    report = json.loads((tmp_path / "work" / "eval-knn.test.json").read_text())
    assert report["metrics"]["R@10"] == 1.0
    assert report["stats"]["call_fraction"] <= 1.0


def test_full_pipeline(generated, tmp_path, capsys):
    cfg = _config(tmp_path, paths={"corpus": str(generated / "qa.tsv")},
                  model={"field": "original"}, pipeline={"eval_split": "test", "pool_depth": 100, "n": 10})
    for cmd in ("ingest", "train-model1", "build-index", "train-weights", "eval-retrieval"):
        assert main([cmd, "-c", cfg]) == 0, cmd
    weights = yaml.safe_load((tmp_path / "work" / "weights.yaml").read_text())
    assert {"w_bm25", "w_model1", "pool_p_at_1"} <= set(weights)
    rc = main(["eval-retrieval", "-c", cfg, "--set", "pipeline.rerank=bm25_model1",
               "--set", f"paths.weights={tmp_path / 'work' / 'weights.yaml'}"])
    assert rc == 0
    report = json.loads((tmp_path / "work" / "eval-retrieval.test.json").read_text())
    assert report["n_queries"] == 40 and 0 <= report["metrics"]["MRR"] <= 1
    assert main(["build-index", "-c", cfg, "--set", "model.similarity=model1"]) == 0
    capsys.readouterr()


def test_train_model1_needs_tran_split(tmp_path, capsys):
    only = tmp_path / "c.tsv"
    only.write_text("p1\ttest\tq\tanswer words\n")
    cfg = _config(tmp_path, paths={"corpus": str(only)})
    assert main(["train-model1", "-c", cfg]) == 3
    assert not (tmp_path / "work").exists()


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "knnrank", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "knnrank" in r.stdout
