"""End-to-end checks of the command-line interface.

Commands run in-process through main() so exit codes and stdout JSON can be
asserted cheaply; one subprocess smoke test covers the module entry point.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import sys

import pytest

from ectuner.cli import main
from ectuner.injector import ErrorLedger, generate_genome, sample_clean_reads
from ectuner.seqio import load_reads, write_fastq


@pytest.fixture(scope="module")
def clean_fastq(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli-data")
    genome = generate_genome(1500, seed=5)
    reads = sample_clean_reads(genome, n=300, read_len=40, seed=6)
    path = str(base / "clean.fastq")
    write_fastq(reads, path)
    return path


def _stdout_json(capsys):
    out = capsys.readouterr().out.strip()
    return json.loads(out.splitlines()[-1])


def test_missing_input_exits_2(tmp_path, capsys):
    rc = main(
        ["perplexity", "--model", str(tmp_path / "no.model"),
         "--reads", str(tmp_path / "no.fastq")]
    )
    assert rc == 2
    assert "input not found" in capsys.readouterr().err


def test_bad_option_value_exits_1(clean_fastq, tmp_path, capsys):
    rc = main(
        ["train", "--reads", clean_fastq, "--out", str(tmp_path / "m.model"),
         "--word-len", "3"]
    )
    assert rc == 1
    assert "word length" in capsys.readouterr().err


def test_missing_required_flag_exits_2(clean_fastq):
    with pytest.raises(SystemExit) as exc:
        main(["correct", "--reads", clean_fastq])
    assert exc.value.code == 2


def test_unrecognized_model_file_exits_1(clean_fastq, tmp_path, capsys):
    bogus = tmp_path / "bogus.model"
    bogus.write_bytes(b"XXXX not a model")
    rc = main(["perplexity", "--model", str(bogus), "--reads", clean_fastq])
    assert rc == 1
    assert "not a recognized model file" in capsys.readouterr().err


def test_train_writes_model_and_resolved_config(clean_fastq, tmp_path, capsys):
    out = str(tmp_path / "lm.model")
    rc = main(["train", "--reads", clean_fastq, "--out", out, "--history", "2"])
    assert rc == 0
    summary = _stdout_json(capsys)
    assert summary["lm"] == "ngram"
    assert summary["reads"] == 300
    assert summary["words"] > 0
    with open(out, "rb") as fh:
        assert fh.read(4) == b"ATHN"
    with open(out + ".config.json") as fh:
        cfg = json.load(fh)
    assert cfg["history"] == 2
    assert cfg["word_len"] == 7
    assert cfg["p_floor"] == 1e-7


def test_flags_beat_config_file_beat_defaults(clean_fastq, tmp_path, capsys):
    cfg_path = tmp_path / "opts.json"
    cfg_path.write_text(json.dumps({"word_len": 5, "history": 1}))
    out = str(tmp_path / "lm.model")
    rc = main(
        ["train", "--reads", clean_fastq, "--out", out,
         "--config", str(cfg_path), "--history", "2"]
    )
    assert rc == 0
    capsys.readouterr()
    with open(out + ".config.json") as fh:
        resolved = json.load(fh)
    assert resolved["word_len"] == 5      # from the config file
    assert resolved["history"] == 2       # flag wins over the file's 1
    assert resolved["p_floor"] == 1e-7    # untouched default


def test_config_file_must_hold_an_object(clean_fastq, tmp_path, capsys):
    cfg_path = tmp_path / "opts.json"
    cfg_path.write_text("[1, 2]")
    rc = main(
        ["train", "--reads", clean_fastq, "--out", str(tmp_path / "m"),
         "--config", str(cfg_path)]
    )
    assert rc == 1
    assert "config must be a JSON object" in capsys.readouterr().err


def test_perplexity_json_is_internally_consistent(clean_fastq, tmp_path, capsys):
    model = str(tmp_path / "lm.model")
    assert main(["train", "--reads", clean_fastq, "--out", model]) == 0
    capsys.readouterr()
    rc = main(["perplexity", "--model", model, "--reads", clean_fastq])
    assert rc == 0
    report = _stdout_json(capsys)
    assert report["scored_words"] > 0
    expected = math.exp(report["sum_neg_log_prob"] / report["scored_words"])
    assert report["avg_perplexity"] == pytest.approx(expected, rel=1e-12)


def test_perplexity_sample_flag_scores_fewer_words(clean_fastq, tmp_path, capsys):
    model = str(tmp_path / "lm.model")
    assert main(["train", "--reads", clean_fastq, "--out", model]) == 0
    capsys.readouterr()
    assert main(["perplexity", "--model", model, "--reads", clean_fastq]) == 0
    full = _stdout_json(capsys)
    assert main(
        ["perplexity", "--model", model, "--reads", clean_fastq,
         "--sample-n", "50", "--seed", "3"]
    ) == 0
    sampled = _stdout_json(capsys)
    assert sampled["scored_words"] < full["scored_words"]


def test_inject_writes_fastq_ledger_and_config(clean_fastq, tmp_path, capsys):
    out = str(tmp_path / "bad.fastq")
    ledger_path = str(tmp_path / "changes.tsv")
    rc = main(
        ["inject", "--reads", clean_fastq, "--out", out,
         "--ledger", ledger_path, "--kind", "substitution",
         "--regime", "low", "--seed", "11"]
    )
    assert rc == 0
    summary = _stdout_json(capsys)
    corrupted = load_reads(out)
    assert len(corrupted) == 300
    ledger = ErrorLedger.from_tsv(ledger_path)
    assert summary["changes"] == len(ledger)
    assert len(ledger) > 0
    with open(out + ".config.json") as fh:
        cfg = json.load(fh)
    assert cfg["kind"] == "substitution"
    assert cfg["seed"] == 11


def test_correct_requires_k_for_builtin(clean_fastq, tmp_path, capsys):
    rc = main(["correct", "--reads", clean_fastq, "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "--k is required" in capsys.readouterr().err


def test_correct_builtin_round_trip(clean_fastq, tmp_path, capsys):
    corrupted = str(tmp_path / "bad.fastq")
    assert main(
        ["inject", "--reads", clean_fastq, "--out", corrupted,
         "--kind", "substitution", "--regime", "low", "--seed", "11"]
    ) == 0
    capsys.readouterr()
    out = str(tmp_path / "fixed.fastq")
    rc = main(["correct", "--reads", corrupted, "--out", out, "--k", "15"])
    assert rc == 0
    summary = _stdout_json(capsys)
    assert summary["value"] == 15
    assert summary["reads"] == 300
    fixed = load_reads(out)
    assert len(fixed) == 300
    assert all(len(r.sequence) == len(r.quality) for r in fixed)


def test_correct_adapter_needs_param_value(clean_fastq, tmp_path, capsys):
    rc = main(
        ["correct", "--reads", clean_fastq, "--out", str(tmp_path / "o"),
         "--adapter-template", "cp {input} {output} {k}"]
    )
    assert rc == 1
    assert "--param-value" in capsys.readouterr().err


def test_correct_via_external_tool(clean_fastq, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ATHENA_TMPDIR", str(tmp_path))
    script = tmp_path / "tool.py"
    script.write_text(
        "import sys\n"
        "src, dst, k = sys.argv[1], sys.argv[2], int(sys.argv[3])\n"
        "assert k == 21\n"
        "open(dst, 'w').write(open(src).read())\n"
    )
    out = str(tmp_path / "copied.fastq")
    rc = main(
        ["correct", "--reads", clean_fastq, "--out", out,
         "--adapter-template",
         f"{sys.executable} {script} {{input}} {{output}} {{k}}",
         "--param-value", "21"]
    )
    assert rc == 0
    summary = _stdout_json(capsys)
    assert summary["value"] == 21
    assert summary["changed_reads"] == 0
    original = load_reads(clean_fastq)
    copied = load_reads(out)
    assert [r.sequence for r in copied] == [r.sequence for r in original]


def test_tune_writes_search_trace_and_corrected_reads(tmp_path, capsys):
    genome = generate_genome(2000, seed=21)
    reads = sample_clean_reads(genome, n=600, read_len=40, seed=22)
    clean = str(tmp_path / "clean.fastq")
    write_fastq(reads, clean)
    corrupted = str(tmp_path / "bad.fastq")
    assert main(
        ["inject", "--reads", clean, "--out", corrupted,
         "--kind", "substitution", "--regime", "low", "--seed", "23"]
    ) == 0
    capsys.readouterr()
    out_dir = str(tmp_path / "tuned")
    rc = main(
        ["tune", "--reads", corrupted, "--out-dir", out_dir,
         "--k-min", "9", "--k-max", "13", "--delta", "2",
         "--sample-n", "200", "--seed", "1"]
    )
    assert rc == 0
    summary = _stdout_json(capsys)
    assert 9 <= summary["best_value"] <= 13
    assert summary["evaluations"] >= 1
    assert len(summary["terminations"]) == 1
    corrected = load_reads(os.path.join(out_dir, "corrected.fastq"))
    assert len(corrected) == 600
    with open(os.path.join(out_dir, "search.json")) as fh:
        search = json.load(fh)
    assert search["best_value"] == summary["best_value"]
    assert len(search["searches"]) == 1
    trace = search["searches"][0]["trace"]
    assert all(9 <= value <= 13 for value, _ in trace)
    with open(os.path.join(out_dir, "config.json")) as fh:
        cfg = json.load(fh)
    assert cfg["k_min"] == 9 and cfg["k_max"] == 13 and cfg["delta"] == 2


def test_tune_accepts_explicit_starting_points(tmp_path, capsys):
    genome = generate_genome(1200, seed=31)
    reads = sample_clean_reads(genome, n=400, read_len=40, seed=32)
    path = str(tmp_path / "reads.fastq")
    write_fastq(reads, path)
    out_dir = str(tmp_path / "tuned")
    rc = main(
        ["tune", "--reads", path, "--out-dir", out_dir,
         "--k-min", "9", "--k-max", "13", "--delta", "2",
         "--initials", "9,13", "--sample-n", "100"]
    )
    assert rc == 0
    summary = _stdout_json(capsys)
    assert len(summary["terminations"]) == 2


def test_sweep_prints_tsv_and_writes_reports(clean_fastq, tmp_path, capsys):
    tsv_out = str(tmp_path / "sweep.tsv")
    json_out = str(tmp_path / "sweep.json")
    rc = main(
        ["sweep", "--reads", clean_fastq, "--values", "9,11,13",
         "--tsv-out", tsv_out, "--json-out", json_out]
    )
    assert rc == 0
    out = capsys.readouterr().out
    lines = out.strip().split("\n")
    assert lines[0].split("\t")[0] == "value"
    assert len(lines) == 4
    assert [line.split("\t")[0] for line in lines[1:]] == ["9", "11", "13"]
    with open(tsv_out) as fh:
        assert fh.read() == out
    with open(json_out) as fh:
        payload = json.load(fh)
    assert [row["value"] for row in payload["rows"]] == [9, 11, 13]
    assert os.path.exists(tsv_out + ".config.json")


def test_eval_reports_gain(tmp_path, capsys):
    from ectuner.seqio import Read, ReadSet

    truth = ReadSet((Read("r0", "AAAA"), Read("r1", "CCCC")))
    original = ReadSet((Read("r0", "AATA"), Read("r1", "CCCC")))
    corrected = ReadSet((Read("r0", "AAAA"), Read("r1", "CCCC")))
    paths = {}
    for name, rs in [("truth", truth), ("original", original),
                     ("corrected", corrected)]:
        paths[name] = str(tmp_path / f"{name}.fastq")
        write_fastq(rs, paths[name])
    rc = main(
        ["eval", "--original", paths["original"],
         "--corrected", paths["corrected"], "--truth", paths["truth"]]
    )
    assert rc == 0
    assert _stdout_json(capsys) == {"gain": 1.0}


def test_thread_count_does_not_change_model_bytes(clean_fastq, tmp_path, capsys):
    one = str(tmp_path / "t1.model")
    many = str(tmp_path / "t8.model")
    assert main(["train", "--reads", clean_fastq, "--out", one,
                 "--threads", "1"]) == 0
    assert main(["train", "--reads", clean_fastq, "--out", many,
                 "--threads", "8"]) == 0
    capsys.readouterr()
    with open(one, "rb") as fa, open(many, "rb") as fb:
        assert fa.read() == fb.read()


def test_train_charrnn_then_score_through_magic_sniffing(tmp_path, capsys):
    genome = generate_genome(800, seed=41)
    reads = sample_clean_reads(genome, n=40, read_len=30, seed=42)
    path = str(tmp_path / "reads.fastq")
    write_fastq(reads, path)
    model = str(tmp_path / "rnn.model")
    rc = main(
        ["train", "--reads", path, "--out", model, "--lm", "charrnn",
         "--layers", "1", "--hidden", "4", "--epochs", "1",
         "--minibatch", "8", "--unroll", "16", "--seed", "2"]
    )
    assert rc == 0
    summary = _stdout_json(capsys)
    assert summary["lm"] == "charrnn"
    assert summary["epochs"] == 1
    with open(model, "rb") as fh:
        assert fh.read(4) == b"ATHR"
    rc = main(["perplexity", "--model", model, "--reads", path])
    assert rc == 0
    report = _stdout_json(capsys)
    assert report["avg_perplexity"] > 1.0


def test_module_entry_point_runs(clean_fastq):
    proc = subprocess.run(
        [sys.executable, "-m", "ectuner.cli", "--help"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    for name in ("train", "perplexity", "inject", "correct",
                 "tune", "sweep", "eval"):
        assert name in proc.stdout
