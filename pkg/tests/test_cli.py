import json
from pathlib import Path

import pytest

from trr.cli import main
from trr.feature_io import write_feature_file
from trr.knowledge_base import serialize_dataset
from trr.synthetic import make_texture_corpus


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset JSON, ranges JSON, split and .trrf files for a small corpus."""
    root = tmp_path_factory.mktemp("cli")
    corpus = make_texture_corpus(n_kb=16, n_queries=6, channels=8, n_frames=12, seed=2)
    data_path = root / "dataset.json"
    serialize_dataset(corpus.records, data_path)

    ranges_path = root / "ranges.json"
    ranges_path.write_text(json.dumps(corpus.ranges.to_dict()))

    features = root / "features"
    kb_features = root / "features_kb"
    features.mkdir()
    kb_features.mkdir()
    for rid, fm in corpus.feature_maps.items():
        write_feature_file(fm, features / f"{rid}.trrf")
        if rid in corpus.split.kb_ids:
            write_feature_file(fm, kb_features / f"{rid}.trrf")

    split_path = root / "split.json"
    from trr.knowledge_base import save_split

    save_split(corpus.split, split_path)
    return {
        "root": root,
        "corpus": corpus,
        "data": str(data_path),
        "ranges": str(ranges_path),
        "features": str(features),
        "features_kb": str(kb_features),
        "split": str(split_path),
    }


def run(argv):
    return main([str(a) for a in argv])


class TestEncode:
    def test_empty_dir_exits_2(self, tmp_path, capsys):
        empty = tmp_path / "none"
        empty.mkdir()
        assert run(["encode", "--features", empty, "--out", tmp_path]) == 2
        assert "no feature files" in capsys.readouterr().err

    def test_encode_writes_store(self, workspace, tmp_path, capsys):
        store = tmp_path / "store.json"
        code = run([
            "encode", "--features", workspace["features_kb"],
            "--proj", tmp_path / "p.trrp", "--store", store, "--out", tmp_path,
        ])
        assert code == 0
        payload = json.loads(store.read_text())
        assert payload["format"] == "trr-embedding-store"
        assert len(payload["entries"]) == 16
        assert payload["dimension"] == 32 * 32

    def test_rerun_byte_identical(self, workspace, tmp_path):
        args = [
            "encode", "--features", workspace["features_kb"],
            "--proj", tmp_path / "p.trrp", "--out", tmp_path,
        ]
        store = tmp_path / "a.json"
        run(args + ["--store", store])
        first = store.read_bytes()
        run(args + ["--store", store])
        assert store.read_bytes() == first

    def test_meanpool_method(self, workspace, tmp_path):
        store = tmp_path / "pool.json"
        code = run([
            "encode", "--features", workspace["features_kb"], "--method", "meanpool",
            "--store", store, "--out", tmp_path,
        ])
        assert code == 0
        assert json.loads(store.read_text())["dimension"] == 8

    def test_jobs_flag_same_entries(self, workspace, tmp_path):
        a, b = tmp_path / "j1.json", tmp_path / "j4.json"
        run(["encode", "--features", workspace["features_kb"],
             "--proj", tmp_path / "p.trrp", "--store", a, "--out", tmp_path])
        run(["encode", "--features", workspace["features_kb"],
             "--proj", tmp_path / "p.trrp", "--store", b, "--out", tmp_path,
             "--jobs", 4])
        entries_a = json.loads(a.read_text())["entries"]
        entries_b = json.loads(b.read_text())["entries"]
        assert entries_a == entries_b


class TestSplitCommands:
    def test_split_and_audit(self, workspace, tmp_path, capsys):
        split_path = tmp_path / "split.json"
        code = run(["split", "--data", workspace["data"], "--test-fraction", "0.25",
                    "--store", split_path, "--seed", 4, "--out", tmp_path])
        assert code == 0
        code = run(["audit-split", "--data", workspace["data"], "--split", split_path,
                    "--ranges", workspace["ranges"], "--tau", "0.01", "--out", tmp_path])
        assert code == 0
        out = capsys.readouterr().out
        assert "shared group keys across split: 0" in out
        audit = json.loads((tmp_path / "audit.json").read_text())
        assert audit["audit"]["shared_path_count"] == 0

    def test_build_kb(self, workspace, tmp_path, capsys):
        code = run(["build-kb", "--data", workspace["data"], "--out", tmp_path])
        assert code == 0
        assert (tmp_path / "kb.json").exists()
        assert "22 records" in capsys.readouterr().out

    def test_missing_file_exits_2(self, tmp_path):
        assert run(["split", "--data", tmp_path / "ghost.json", "--out", tmp_path]) == 2


class TestQuery:
    def test_text_only(self, workspace, tmp_path, capsys):
        code = run(["query", "--data", workspace["data"],
                    "--text", "tight scooped chug", "--k", 3, "--out", tmp_path])
        assert code == 0
        out = capsys.readouterr().out
        assert "w_text=1.000" in out
        assert "top-1 parameters" in out

    def test_audio_only_self_retrieval(self, workspace, tmp_path, capsys):
        proj = tmp_path / "p.trrp"
        store = tmp_path / "store.json"
        run(["encode", "--features", workspace["features_kb"], "--proj", proj,
             "--store", store, "--out", tmp_path])
        kb_id = workspace["corpus"].split.kb_ids[0]
        feature_file = Path(workspace["features"]) / f"{kb_id}.trrf"
        code = run(["query", "--data", workspace["data"], "--store", store,
                    "--feature-file", feature_file, "--proj", proj,
                    "--ranges", workspace["ranges"], "--out", tmp_path])
        assert code == 0
        out = capsys.readouterr().out
        assert f"1. {kb_id}" in out
        assert "score=1.000000" in out
        assert "feasibility: pass" in out

    def test_no_modalities_exits_2(self, workspace, tmp_path):
        assert run(["query", "--data", workspace["data"], "--out", tmp_path]) == 2


class TestEvalAndFriends:
    def test_eval_writes_report_and_table(self, workspace, tmp_path, capsys):
        code = run([
            "eval", "--data", workspace["data"], "--split", workspace["split"],
            "--features", workspace["features"], "--ranges", workspace["ranges"],
            "--methods", "trr,meanpool,text",
            "--bootstrap-resamples", 1000, "--permutation-resamples", 2000,
            "--out", tmp_path,
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "Method" in out and "TRR" in out
        report = json.loads((tmp_path / "eval.json").read_text())
        assert {m["method"] for m in report["methods"]} == {"TRR", "MeanPool", "Text"}
        assert report["config"]["permutation_resamples"] == 2000

    def test_config_file_defaults(self, workspace, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"methods": "text", "k": 1}))
        code = run([
            "eval", "--data", workspace["data"], "--split", workspace["split"],
            "--features", workspace["features"], "--config", cfg,
            "--bootstrap-resamples", 1000, "--permutation-resamples", 2000,
            "--out", tmp_path,
        ])
        assert code == 0
        report = json.loads((tmp_path / "eval.json").read_text())
        assert [m["method"] for m in report["methods"]] == ["Text"]

    def test_ablate_singleton_matches_eval(self, workspace, tmp_path):
        code = run([
            "ablate", "--kind", "projection_dim", "--grid", "32",
            "--data", workspace["data"], "--split", workspace["split"],
            "--features", workspace["features"], "--out", tmp_path,
        ])
        assert code == 0
        abl = json.loads((tmp_path / "ablation_projection_dim.json").read_text())
        assert abl["points"][0]["embedding_dim"] == 1024

        code = run([
            "eval", "--data", workspace["data"], "--split", workspace["split"],
            "--features", workspace["features"], "--methods", "trr",
            "--bootstrap-resamples", 1000, "--permutation-resamples", 2000,
            "--out", tmp_path,
        ])
        assert code == 0
        ev = json.loads((tmp_path / "eval.json").read_text())
        assert abl["points"][0]["aggregates"] == ev["methods"][0]["aggregates"]

    def test_dedup_sweep(self, workspace, tmp_path, capsys):
        code = run([
            "dedup-sweep", "--taus", "0.005,0.01,0.02,0.05",
            "--data", workspace["data"], "--split", workspace["split"],
            "--features", workspace["features"], "--ranges", workspace["ranges"],
            "--methods", "text", "--out", tmp_path,
        ])
        assert code == 0
        sweep = json.loads((tmp_path / "dedup_sweep.json").read_text())
        sizes = [e["kb_size"] for e in sweep["entries"]]
        assert sizes == sorted(sizes, reverse=True)

    def test_profile_fake_clock_deterministic(self, workspace, tmp_path):
        args = [
            "profile", "--data", workspace["data"], "--split", workspace["split"],
            "--features", workspace["features"], "--fake-clock", "0.0009765625",
            "--warmups", 1, "--repeats", 2, "--out", tmp_path,
        ]
        assert run(args) == 0
        first = (tmp_path / "latency_profile.json").read_text()
        assert run(args) == 0
        assert (tmp_path / "latency_profile.json").read_text() == first
        payload = json.loads(first)
        assert payload["pool_size"] == 6 * 2
        for stats in payload["components"].values():
            assert stats["median_ms"] == stats["p95_ms"]


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
