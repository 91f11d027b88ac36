import json
import math
import shutil

import numpy as np
import pandas as pd
import pytest

from pqcexpr.cli import main
from pqcexpr.gnn.checkpoint import load_checkpoint
from pqcexpr.gnn.model import predict
from pqcexpr.manifest import read_manifest, read_manifest_meta, write_manifest
from pqcexpr.models.circuit import GateKind, serialize, to_document
from pqcexpr.models.records import DatasetRecord
from pqcexpr.pipeline import read_circuit, rmse


def stdout_fields(text):
    return dict(part.split("=") for part in text.split())


@pytest.mark.parametrize(
    "pairs, expected",
    [
        ([(0.4, 0.4), (1.2, 1.2)], 0.0),
        ([(0.0, 1.0), (1.0, 0.0)], 1.0),
        ([(0.5, 0.53), (0.9, 0.93), (2.0, 2.03)], 0.03),
        ([(0.2, 0.26), (0.7, 0.76)], 0.06),
    ],
)
def test_rmse(pairs, expected):
    assert rmse(pairs) == pytest.approx(expected, abs=1e-12)


def test_rmse_needs_pairs():
    with pytest.raises(ValueError):
        rmse([])


def test_generate_writes_documents_and_manifest(tmp_path, capsys):
    assert main(["generate", "--count", "6", "--seed", "3", "--out", str(tmp_path / "a")]) == 0
    assert capsys.readouterr().out.strip().endswith("manifest.jsonl")
    records = read_manifest(tmp_path / "a" / "manifest.jsonl")
    assert [record.circuit_id for record in records] == [f"rand-{i:05d}" for i in range(6)]
    assert all(record.label is None for record in records)
    meta = read_manifest_meta(tmp_path / "a" / "manifest.jsonl")
    assert meta["seed"] == 3
    assert sum(meta["depth_histogram"].values()) == 6
    assert sorted(int(d) for d in meta["depth_histogram"]) == sorted({r.descriptor["depth"] for r in records})
    for record in records:
        assert read_circuit(tmp_path / "a" / "circuits" / f"{record.circuit_id}.json") == record.parsed_circuit()

    assert main(["generate", "--count", "6", "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (tmp_path / "b" / "manifest.jsonl").read_bytes()


def test_library_value_errors_are_data_errors(tmp_path, monkeypatch, capsys):
    def exhausted(*args, **kwargs):
        raise ValueError("no circuit within depth 3 after 100 attempts")

    monkeypatch.setattr("pqcexpr.cli.write_circuit_set", exhausted)
    assert main(["generate", "--count", "2", "--out", str(tmp_path)]) == 2
    assert "no circuit within depth" in capsys.readouterr().err


def test_generate_single_qubit(tmp_path):
    assert main(["generate", "--count", "1", "--max-qubits", "1", "--out", str(tmp_path)]) == 0
    circuit = read_manifest(tmp_path / "manifest.jsonl")[0].parsed_circuit()
    assert circuit.num_qubits == 1
    assert all(gate.kind is not GateKind.CX for gate in circuit.gates)


def test_seed_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PQCEXPR_SEED", "7")
    main(["generate", "--count", "4", "--out", str(tmp_path / "env")])
    main(["generate", "--count", "4", "--seed", "7", "--out", str(tmp_path / "flag")])
    main(["generate", "--count", "4", "--seed", "8", "--out", str(tmp_path / "other")])
    env = (tmp_path / "env" / "manifest.jsonl").read_bytes()
    assert env == (tmp_path / "flag" / "manifest.jsonl").read_bytes()
    assert env != (tmp_path / "other" / "manifest.jsonl").read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["generate", "--out", "x"],
        ["generate", "--count", "0", "--out", "x"],
        ["generate", "--count", "2", "--max-qubits", "9", "--out", "x"],
        ["label", "--manifest", "m.jsonl", "--mode", "approx"],
        ["train", "--dataset", "m.jsonl", "--out-model", "m", "--out-history", "h", "--split", "1.5"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_with_one(argv):
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == 1


def test_label_bins_below_two_is_a_usage_error(tmp_path):
    main(["generate", "--count", "1", "--out", str(tmp_path)])
    with pytest.raises(SystemExit) as err:
        main(["label", "--manifest", str(tmp_path / "manifest.jsonl"), "--bins", "1"])
    assert err.value.code == 1


def test_point_mass_label_and_resume(build, tmp_path, capsys):
    manifest = tmp_path / "manifest.jsonl"
    write_manifest(manifest, [DatasetRecord(circuit_id="idle", circuit=to_document(build(1, ("X", 0))))])
    assert main(["label", "--manifest", str(manifest), "--samples", "200", "--bins", "75", "--seed", "0"]) == 0
    assert stdout_fields(capsys.readouterr().out) == {"labeled": "1", "skipped": "0", "failed": "0"}
    record = read_manifest(manifest)[0]
    assert record.label == pytest.approx(math.log(75), abs=1e-9)
    assert record.estimator["num_bins"] == 75
    assert record.estimator["log_base"] == "e"

    before = manifest.read_bytes()
    assert main(["label", "--manifest", str(manifest), "--samples", "200", "--bins", "75"]) == 0
    assert stdout_fields(capsys.readouterr().out)["skipped"] == "1"
    assert manifest.read_bytes() == before


def test_labels_do_not_depend_on_jobs(tmp_path):
    main(["generate", "--count", "8", "--max-qubits", "3", "--max-depth", "12", "--seed", "1", "--out", str(tmp_path / "one")])
    shutil.copytree(tmp_path / "one", tmp_path / "two")
    flags = ["--samples", "100", "--bins", "20", "--seed", "4"]
    assert main(["label", "--manifest", str(tmp_path / "one" / "manifest.jsonl"), "--jobs", "1", *flags]) == 0
    assert main(["label", "--manifest", str(tmp_path / "two" / "manifest.jsonl"), "--jobs", "2", *flags]) == 0
    one = read_manifest(tmp_path / "one" / "manifest.jsonl")
    two = read_manifest(tmp_path / "two" / "manifest.jsonl")
    assert [record.label for record in one] == [record.label for record in two]
    assert all(record.label >= 0 for record in one)


def wide_document(build):
    document = to_document(build(1, ("RX", 0)))
    document["num_qubits"] = 6
    return document


def listed_kind_document(build):
    document = to_document(build(1, ("RX", 0)))
    document["gates"][0]["kind"] = ["RX"]
    return document


@pytest.mark.parametrize("broken, reason", [(wide_document, "num_qubits"), (listed_kind_document, "gates[0].kind")])
def test_label_reports_failures_and_continues(build, tmp_path, capsys, broken, reason):
    manifest = tmp_path / "manifest.jsonl"
    write_manifest(manifest, [
        DatasetRecord(circuit_id="bad", circuit=broken(build)),
        DatasetRecord(circuit_id="good", circuit=to_document(build(1, ("RX", 0)))),
    ])
    assert main(["label", "--manifest", str(manifest), "--samples", "50", "--bins", "10"]) == 2
    assert stdout_fields(capsys.readouterr().out) == {"labeled": "1", "skipped": "0", "failed": "1"}
    bad, good = read_manifest(manifest)
    assert bad.label is None and reason in bad.error
    assert good.label is not None and good.error is None


def test_corrupt_manifest_is_a_data_error(tmp_path):
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text('{"circuit_id": "a"\n')
    assert main(["label", "--manifest", str(manifest)]) == 2
    assert main(["label", "--manifest", str(tmp_path / "missing.jsonl")]) == 2


def test_realamp_suite_files(tmp_path):
    assert main(["realamp", "--out", str(tmp_path)]) == 0
    records = read_manifest(tmp_path / "manifest.jsonl")
    assert len(records) == 64
    assert len({record.circuit_id for record in records}) == 64
    assert len(list((tmp_path / "circuits").glob("*.json"))) == 64
    assert records[0].descriptor["family"] == "realamp"
    meta = read_manifest_meta(tmp_path / "manifest.jsonl")
    assert meta["source"] == "realamp" and len(meta["circuits"]) == 64
    assert meta["pair_conventions"]["circular"].startswith("(n-1, 0) first")
    first = (tmp_path / "manifest.jsonl").read_bytes()
    main(["realamp", "--out", str(tmp_path)])
    assert (tmp_path / "manifest.jsonl").read_bytes() == first


def test_train_rejects_unlabeled_manifest(tmp_path, capsys):
    main(["generate", "--count", "3", "--out", str(tmp_path)])
    code = main([
        "train", "--dataset", str(tmp_path / "manifest.jsonl"),
        "--out-model", str(tmp_path / "m.json"), "--out-history", str(tmp_path / "h.csv"),
    ])
    assert code == 2
    assert "rand-00000" in capsys.readouterr().err


def test_predict_rejects_wide_circuit(build, tmp_path):
    main(["generate", "--count", "6", "--out", str(tmp_path)])
    main(["label", "--manifest", str(tmp_path / "manifest.jsonl"), "--samples", "50", "--bins", "10"])
    main([
        "train", "--dataset", str(tmp_path / "manifest.jsonl"), "--epochs", "2", "--batch", "4",
        "--out-model", str(tmp_path / "m.json"), "--out-history", str(tmp_path / "h.csv"),
    ])
    wide = tmp_path / "wide.json"
    wide.write_text(serialize(build(5, ("RX", 4), ("CX", 4, 0))))
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--circuit", str(wide)]) == 2


def test_graph_command(bell_like, tmp_path, capsys):
    path = tmp_path / "bell.json"
    path.write_text(serialize(bell_like))
    assert main(["graph", "--circuit", str(path)]) == 0
    document = json.loads(capsys.readouterr().out)
    assert document["circuit_id"] == "bell"
    assert len(document["nodes"]) == 6
    assert document["edges"][0] == [0, 2]


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    """Generate, label, and train a small model once for the end-to-end checks."""
    root = tmp_path_factory.mktemp("e2e")
    data = root / "data"
    assert main(["generate", "--count", "30", "--max-qubits", "3", "--max-depth", "16", "--seed", "5", "--out", str(data)]) == 0
    assert main(["label", "--manifest", str(data / "manifest.jsonl"), "--samples", "200", "--bins", "25", "--seed", "5"]) == 0
    train_argv = [
        "train", "--dataset", str(data / "manifest.jsonl"), "--epochs", "8", "--lr", "1e-3", "--batch", "8", "--seed", "5",
    ]
    assert main([*train_argv, "--out-model", str(root / "model.json"), "--out-history", str(root / "history.csv")]) == 0
    assert main([*train_argv, "--out-model", str(root / "again.json"), "--out-history", str(root / "again.csv")]) == 0
    return root


def test_training_outputs(pipeline_run):
    history = pd.read_csv(pipeline_run / "history.csv")
    assert list(history.columns) == ["epoch", "train_loss", "val_loss", "lr"]
    assert len(history) == 8
    assert (pipeline_run / "model.json").read_bytes() == (pipeline_run / "again.json").read_bytes()
    assert (pipeline_run / "history.csv").read_bytes() == (pipeline_run / "again.csv").read_bytes()


def test_eval_reports_consistent_rmse(pipeline_run, capsys):
    out = pipeline_run / "eval.csv"
    argv = ["eval", "--model", str(pipeline_run / "model.json"), "--dataset", str(pipeline_run / "data" / "manifest.jsonl")]
    assert main([*argv, "--subset", "val", "--out", str(out)]) == 0
    fields = stdout_fields(capsys.readouterr().out)
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["circuit_id", "true", "predicted", "error"]
    assert int(fields["circuits"]) == len(frame) == 6
    assert np.allclose(frame["error"], frame["predicted"] - frame["true"])
    recomputed = math.sqrt(float(np.mean((frame["predicted"] - frame["true"]) ** 2)))
    assert float(fields["rmse"]) == pytest.approx(recomputed, abs=1e-6)

    assert main([*argv, "--subset", "all"]) == 0
    assert stdout_fields(capsys.readouterr().out)["circuits"] == "30"


def test_predict_matches_library(pipeline_run, capsys):
    circuit_path = pipeline_run / "data" / "circuits" / "rand-00003.json"
    argv = ["predict", "--model", str(pipeline_run / "model.json"), "--circuit", str(circuit_path)]
    assert main(argv) == 0
    first = capsys.readouterr().out.strip()
    assert main(argv) == 0
    assert capsys.readouterr().out.strip() == first
    expected = predict(load_checkpoint(pipeline_run / "model.json"), read_circuit(circuit_path))
    assert first == f"{expected:.6f}"
    assert len(first.split(".")[1]) == 6


def test_benchmark_command(pipeline_run, capsys):
    argv = [
        "benchmark", "--model", str(pipeline_run / "model.json"),
        "--dataset", str(pipeline_run / "data" / "manifest.jsonl"), "--limit", "3", "--samples", "100", "--bins", "10",
    ]
    assert main(argv) == 0
    fields = stdout_fields(capsys.readouterr().out)
    assert fields["circuits"] == "3"
    assert float(fields["label_seconds"]) > 0
