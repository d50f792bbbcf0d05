"""Tests for the phaseforge command line (exit codes, files written, printed summaries)."""

import json

import pytest

from cli.main import build_parser, main
from phaseforge.application.dto import ResultsTable
from phaseforge.infrastructure import ResultsDocument, emit_report, load_checkpoint

TINY = [
    "--set", "workflow.num_videos=6",
    "--set", "workflow.phase_duration_mean=[20, 30, 25, 30, 20, 25, 15]",
    "--set", "workflow.phase_duration_std=[3, 3, 3, 3, 3, 3, 3]",
    "--set", "arch.encoder_widths=[8]",
    "--set", "arch.lstm_hidden=8",
    "--set", "protocol.folds=1",
    "--set", "protocol.n_train=3",
    "--set", "protocol.n_val=1",
    "--set", "protocol.n_test=2",
    "--set", "protocol.log_every=0",
    "--set", "phase_encoder.epochs=1",
    "--set", "endon2n.epochs=1",
    "--set", "endon2n.pad_to=null",
]


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch) -> None:
    monkeypatch.delenv("PHASEFORGE_CONFIG", raising=False)
    monkeypatch.delenv("PHASEFORGE_THREADS", raising=False)


def _run(tmp_path, *argv: str) -> int:
    return main(["--out", str(tmp_path), *TINY, *argv])


def test_parser_requires_a_command() -> None:
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_generate_writes_dataset(tmp_path, capsys) -> None:
    assert _run(tmp_path, "generate") == 0
    manifest = json.loads((tmp_path / "data" / "manifest.json").read_text(encoding="utf-8"))
    assert len(manifest["video_ids"]) == 6
    assert "Wrote 6 videos" in capsys.readouterr().out


def test_generate_is_reproducible(tmp_path) -> None:
    assert _run(tmp_path / "a", "generate") == 0
    assert _run(tmp_path / "b", "generate") == 0
    a = (tmp_path / "a" / "data" / "video-000.jsonl").read_bytes()
    b = (tmp_path / "b" / "data" / "video-000.jsonl").read_bytes()
    assert a == b


def test_missing_dataset_is_an_input_error(tmp_path) -> None:
    assert _run(tmp_path, "train-endon2n") == 1


def test_bad_configuration_exits_with_one(tmp_path) -> None:
    assert main(["--out", str(tmp_path), "--set", "protocol.fold=2", "generate"]) == 1
    assert main(["--out", str(tmp_path), "--set", "rsd.gamma=0", "generate"]) == 1
    assert not (tmp_path / "data").exists()


def test_end_to_end_fold_and_evaluate(tmp_path, capsys) -> None:
    assert _run(tmp_path, "generate") == 0
    assert _run(tmp_path, "train-endon2n", "--mode", "none") == 0
    out = capsys.readouterr().out
    assert "endon2n fold 0 test: accuracy" in out

    checkpoints = sorted(
        p for p in (tmp_path / "checkpoints").glob("*.ckpt") if ".endon2n-" in p.name
    )
    assert checkpoints
    assert load_checkpoint(checkpoints[0]).arch_tag.value == "endon2n-vanilla"
    assert (tmp_path / "logs").is_dir()

    assert _run(tmp_path, "evaluate", "--checkpoint", str(checkpoints[0])) == 0
    [report] = (tmp_path / "reports").glob("evaluate-*.json")
    data = json.loads(report.read_text(encoding="utf-8"))
    assert len(data["videos"]) == 2
    assert 0.0 <= data["scalars"]["accuracy"]["mean"] <= 100.0


def test_evaluate_rejects_rsd_models(tmp_path) -> None:
    assert _run(tmp_path, "generate") == 0
    assert _run(tmp_path, "--set", "rsd.epochs=1", "pretrain-rsd") == 0
    rsd = next(p for p in (tmp_path / "checkpoints").glob("*.ckpt") if ".rsd-" in p.name)
    assert _run(tmp_path, "evaluate", "--checkpoint", str(rsd)) == 2


def test_gradcheck_passes(tmp_path, capsys) -> None:
    assert main(["--out", str(tmp_path), "gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "rsdnet" in out
    assert "tolerance 1e-05" in out


def test_report_schema(tmp_path, capsys) -> None:
    assert main(["--out", str(tmp_path), "report", "--schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "rows" in schema["properties"]


def test_report_needs_input(tmp_path) -> None:
    assert main(["--out", str(tmp_path), "report"]) == 1


def test_report_reemits_csv(tmp_path) -> None:
    document = ResultsDocument.from_table(
        ResultsTable(kind="annotation", rows=(), summary=()), config_hash="h", seed=0
    )
    [path] = emit_report(document, tmp_path / "in", "json", stem="sweep")
    assert main(["--out", str(tmp_path), "report", "--input", str(path)]) == 0
    assert (tmp_path / "reports" / "sweep.csv").exists()
    assert (tmp_path / "reports" / "sweep-summary.csv").exists()
