import json
import subprocess
import sys

import pytest

from vecfi.cli import build_parser, main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_codec_examples(capsys):
    assert run(["codec", "0x3C", "FP8"], capsys)[:2] == (0, "1.0 normal s=0 e=01111 m=00\n")
    code, out, _ = run(["codec", "0x7F800000", "FP32"], capsys)
    assert code == 0 and out.startswith("+Inf ")
    code, out, _ = run(["codec", "0x01", "FP8"], capsys)
    assert code == 0 and out.split()[:2] == [repr(2.0 ** -16), "subnormal"]


def test_codec_errors(capsys):
    assert run(["codec", "0x1FF", "FP8"], capsys)[0] == 2
    assert run(["codec", "zz", "FP8"], capsys)[0] == 2
    assert run(["codec", "0x1", "FP7"], capsys)[0] == 2


def test_help_documents_default_seed():
    assert "0xc0ffee" in build_parser().format_help().lower()


def test_trial_json(capsys):
    code, out, _ = run(["trial", "--precision", "FP16", "--dims", "4x4x4",
                        "--site", "vfu.lane0.valid", "--bit", "0", "--cycle", "3"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["class"] == "FS" and doc["sdc"] is False
    assert set(doc) == {"fault", "class", "sdc", "first_divergence_cycle", "K", "rmse"}
    assert doc["fault"] == {"kind": "SET", "site_id": "vfu.lane0.valid", "bit": 0, "cycle": 3}


def test_trial_sampled_operand(capsys):
    argv = ["trial", "--precision", "FP8", "--dims", "4x4x4", "--field", "exponent", "--trial-index", "2"]
    code, first, _ = run(argv, capsys)
    assert code == 0 and run(argv, capsys)[1] == first


def test_trial_bad_site(capsys):
    code, _, err = run(["trial", "--dims", "2x2x2", "--site", "nope", "--bit", "0", "--cycle", "0"], capsys)
    assert code == 2 and "nope" in err


def test_sdc_reproducible(tmp_path, capsys):
    outs = []
    for name, workers in (("a", "1"), ("b", "2")):
        d = tmp_path / name
        assert run(["sdc", "--trials", "1", "--seed", "7", "--out-dir", str(d), "--workers", workers], capsys)[0] == 0
        outs.append(d)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == ["sdc_results.csv", "sdc_results.json", "sdc_scatter_points.csv",
                     "sdc_scatter_suite_7.svg", "sdc_trials.csv"]
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()


def test_sdc_single_workload_and_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kernels": [{"precision": "FP8", "kind": "MatMul", "dims": [4, 4, 4]}],
                               "fields": ["sign", "mantissa"], "trials": 50}))
    out = tmp_path / "o"
    assert run(["sdc", "--config", str(cfg), "--trials", "5", "--out-dir", str(out)], capsys)[0] == 0
    lines = (out / "sdc_trials.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 5  # the flag wins over the config value
    assert (out / "sdc_scatter_matmul_12648430.svg").exists()


def test_sdc_unknown_precision(tmp_path, capsys):
    code, _, err = run(["sdc", "--precision", "FP12", "--trials", "1", "--out-dir", str(tmp_path)], capsys)
    assert code == 2 and "FP12" in err


def test_modules_runs_and_rejects_vsldu(tmp_path, capsys):
    code, out, _ = run(["modules", "--precision", "FP16", "--kernel", "MatMul", "--dims", "4x4x4",
                        "--fault-kind", "seu", "--trials", "100", "--out-dir", str(tmp_path)], capsys)
    assert code == 0 and out.startswith("SEU:")
    trials = (tmp_path / "module_trials.csv").read_text().splitlines()[1:]
    assert len(trials) == 100 and all(",SEU," in t for t in trials)
    assert (tmp_path / "module_shares.csv").exists()
    code, _, err = run(["modules", "--modules", "vsldu", "--out-dir", str(tmp_path)], capsys)
    assert code == 2 and "VSLDU" in err


def test_report_reaggregates(tmp_path, capsys):
    run(["sdc", "--precision", "FP16", "--kernel", "MatMul", "--dims", "4x4x4", "--trials", "20",
         "--out-dir", str(tmp_path)], capsys)
    rep = tmp_path / "rep"
    assert run(["report", str(tmp_path / "sdc_trials.csv"), "--out-dir", str(rep)], capsys)[0] == 0
    assert (rep / "sdc_results.json").read_bytes() == (tmp_path / "sdc_results.json").read_bytes()


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "vecfi", "sdc", "--trials", "x"], capture_output=True)
    assert proc.returncode == 2


def test_invariant_violation_exit_code(monkeypatch, tmp_path, capsys):
    from vecfi import cli
    from vecfi.campaign import TrialRecord

    def broken(*args, **kwargs):
        return [TrialRecord("FP8", "MatMul", "sign", "SET", 0, "vfu.operand_a", 7, 1, "Masked", True, 1, 1.0, 0)]

    monkeypatch.setattr(cli, "run_sdc_suite", broken)
    assert run(["sdc", "--trials", "1", "--out-dir", str(tmp_path)], capsys)[0] == 3
