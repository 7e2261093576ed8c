import json

import pytest

from src.infrastructure.cli.commands import build_parser
from src.main import main


def test_help_lists_every_config_key(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["train", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for key in ("train.attn.gamma", "train.loss.lambda_sep", "synth.small_part_ratio"):
        assert key in out


def test_unknown_config_key_exits_2(tmp_path, capsys):
    code = main(["losscheck", "--out", str(tmp_path), "--set", "train.attn.gama=0.2"])
    assert code == 2
    assert "train.attn.gama" in capsys.readouterr().err


def test_invalid_config_value_exits_2(tmp_path, capsys):
    code = main(["losscheck", "--out", str(tmp_path), "--set", "train.attn.gaussian_kernel=4"])
    assert code == 2
    assert "train.attn.gaussian_kernel" in capsys.readouterr().err


def test_runtime_failure_exits_1(tmp_path):
    args = ["eval", "--checkpoint", str(tmp_path / "missing.ckpt")]
    args += ["--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "out")]
    assert main(args) == 1


def test_taxonomy_validate(tmp_path, capsys):
    assert main(["taxonomy", "validate", "ade20k_part_234", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["num_obj_part"] == 234
    assert (tmp_path / "config.json").is_file()


def test_losscheck_passes(tmp_path):
    assert main(["losscheck", "--instances", "1", "--out", str(tmp_path)]) == 0
    assert "PASS" in (tmp_path / "losscheck.txt").read_text(encoding="utf-8")


def test_generate_train_eval_round_trip(tmp_path, tiny_overrides, capsys):
    data = tmp_path / "data"
    assert main(["synth", "generate", "--out", str(data), "--seed", "3", *tiny_overrides]) == 0
    assert (data / "train" / "manifest.tsv").is_file()

    run = tmp_path / "run"
    assert main(["train", "--data", str(data), "--out", str(run), *tiny_overrides]) == 0
    capsys.readouterr()
    checkpoint = run / "checkpoints" / "last.ckpt"
    assert checkpoint.is_file()

    code = main(
        ["eval", "--checkpoint", str(checkpoint), "--data", str(data), "--out", str(tmp_path / "e")]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "Seen" in out and "Harmonic" in out
    for protocol in ("pred_all", "oracle_obj"):
        report = json.loads((tmp_path / "e" / f"eval_{protocol}.json").read_text())
        assert report["protocol"] == protocol
        assert 0.0 <= (report["seen_miou"] or 0.0) <= 1.0


def test_resume_with_other_config_needs_override(tmp_path, synthetic_root, tiny_overrides):
    run = tmp_path / "run"
    assert main(["train", "--data", str(synthetic_root), "--out", str(run), *tiny_overrides]) == 0
    checkpoint = str(run / "checkpoints" / "step_000003.ckpt")
    args = ["train", "--data", str(synthetic_root), "--out", str(tmp_path / "r"), *tiny_overrides]
    args += ["--resume", checkpoint, "--set", "train.attn.gamma=0.25"]
    assert main(args) == 1
    assert main([*args, "--allow-config-mismatch"]) == 0
