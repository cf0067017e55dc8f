"""Command-line interface.

Subcommands cover the whole pipeline: train, perplexity, inject, correct,
tune, sweep, eval.  Machine-readable results (JSON or TSV) go to stdout,
human progress notes to stderr.  Option values resolve as explicit flags
first, then entries from --config (a JSON object keyed by the flag's long
name with underscores), then built-in defaults; every file-producing command
writes the fully-resolved configuration next to its output.

Exit codes: 0 success, 1 runtime failure, 2 usage errors or missing inputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import charrnn, ecsim, metrics, ngram, tuner
from .injector import InjectionSpec, inject_readset
from .segmenter import SegmentStats
from .seqio import load_reads, sample_reads, write_fastq


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults, for the keys in ``defaults``."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    resolved = {}
    for key, default in defaults.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved

def _write_config(resolved: dict, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(resolved, sort_keys=True, indent=2) + "\n")


def _load_model(path: str):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == ngram.MAGIC:
        return ngram.NgramModel.load(path)
    if magic == charrnn.MAGIC:
        return charrnn.RnnLm.load(path)
    raise ValueError(f"{path}: not a recognized model file")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")


def _rnn_config(cfg: dict) -> charrnn.TrainConfig:
    return charrnn.TrainConfig(
        layers=cfg["layers"],
        hidden=cfg["hidden"],
        epochs=cfg["epochs"],
        minibatch=cfg["minibatch"],
        learning_rate=cfg["learning_rate"],
        unroll=cfg["unroll"],
    )


def _make_corrector(cfg: dict):
    if cfg["adapter_template"]:
        adapter = ecsim.ToolAdapter(
            command_template=cfg["adapter_template"],
            param_name=cfg["adapter_param"],
            timeout=cfg["timeout"],
        )
        return ecsim.adapter_corrector(adapter)
    return ecsim.builtin_corrector(cfg["solid_min"], cfg["max_edits"])


_CORRECTOR_DEFAULTS = {
    "solid_min": 3,
    "max_edits": 2,
    "adapter_template": None,
    "adapter_param": "k",
    "timeout": None,
}


# -- subcommands ----------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve(
        args,
        {
            "lm": "ngram",
            "word_len": ngram.DEFAULT_WORD_LEN,
            "history": ngram.DEFAULT_HISTORY,
            "p_floor": ngram.DEFAULT_P_FLOOR,
            "layers": 2,
            "hidden": 32,
            "epochs": 10,
            "minibatch": 200,
            "learning_rate": 2e-3,
            "unroll": 50,
            "seed": 0,
            "threads": 1,
        },
    )
    reads = load_reads(args.reads)
    if cfg["lm"] == "ngram":
        if not 4 <= cfg["word_len"] <= 12:
            raise ValueError(f"word length must be in 4..12, got {cfg['word_len']}")
        if cfg["word_len"] < 5:
            _say(f"warning: word length {cfg['word_len']} below 5 loses context")
        if not 0 <= cfg["history"] <= 5:
            raise ValueError(f"history must be in 0..5, got {cfg['history']}")
        stats = SegmentStats()
        model = ngram.train_reads(
            reads,
            word_len=cfg["word_len"],
            history=cfg["history"],
            p_floor=cfg["p_floor"],
            threads=cfg["threads"],
            stats=stats,
        )
        model.save(args.out)
        summary = {
            "lm": "ngram",
            "model": args.out,
            "reads": len(reads),
            "short_reads": stats.short_reads,
            "words": model.m_train,
            "skipped_words": stats.skipped_words,
            "vocab_size": model.vocab_size,
        }
    elif cfg["lm"] == "charrnn":
        model, history = charrnn.train(reads, _rnn_config(cfg), seed=cfg["seed"])
        model.save(args.out)
        summary = {
            "lm": "charrnn",
            "model": args.out,
            "reads": len(reads),
            "chars": sum(len(r.sequence) for r in reads),
            "epochs": len(history),
            "final_train_loss": history[-1]["train_loss"],
            "best_val_loss": min(h["val_loss"] for h in history),
        }
    else:
        raise ValueError(f"unknown language model kind {cfg['lm']!r}")
    _write_config(cfg, args.out + ".config.json")
    _emit(summary)
    _say(f"trained {cfg['lm']} model on {len(reads)} reads -> {args.out}")
    return 0


def cmd_perplexity(args: argparse.Namespace) -> int:
    cfg = _resolve(args, {"sample_n": None, "seed": 0, "threads": 1})
    model = _load_model(args.model)
    reads = load_reads(args.reads)
    if cfg["sample_n"] is not None:
        reads = sample_reads(reads, cfg["sample_n"], cfg["seed"])
    report = model.score_reads(reads, threads=cfg["threads"])
    _emit(report.to_dict())
    return 0


def cmd_inject(args: argparse.Namespace) -> int:
    cfg = _resolve(
        args,
        {"kind": "substitution", "regime": "low", "seed": 0, "threads": 1},
    )
    reads = load_reads(args.reads)
    spec = InjectionSpec(kind=cfg["kind"], regime=cfg["regime"], seed=cfg["seed"])
    corrupted, ledger = inject_readset(reads, spec, threads=cfg["threads"])
    write_fastq(corrupted, args.out)
    if args.ledger:
        ledger.to_tsv(args.ledger)
    _write_config(cfg, args.out + ".config.json")
    _emit({"reads": len(corrupted), "changes": len(ledger), "out": args.out})
    _say(
        f"injected {cfg['kind']}/{cfg['regime']} errors into {len(corrupted)} reads "
        f"({len(ledger)} changes)"
    )
    return 0


def cmd_correct(args: argparse.Namespace) -> int:
    cfg = _resolve(
        args,
        {
            "k": None,
            "param_value": None,
            "seed": 0,
            "threads": 1,
            **_CORRECTOR_DEFAULTS,
        },
    )
    reads = load_reads(args.reads)
    if cfg["adapter_template"]:
        value = cfg["param_value"]
        if value is None:
            raise ValueError("--param-value is required with --adapter-template")
        adapter = ecsim.ToolAdapter(
            command_template=cfg["adapter_template"],
            param_name=cfg["adapter_param"],
            timeout=cfg["timeout"],
        )
        corrected = ecsim.run_external(adapter, value, reads)
    else:
        if cfg["k"] is None:
            raise ValueError("--k is required for the built-in corrector")
        value = cfg["k"]
        corrected = ecsim.kspectrum_correct(
            reads,
            ecsim.KSpectrumConfig(cfg["k"], cfg["solid_min"], cfg["max_edits"]),
            threads=cfg["threads"],
        )
    write_fastq(corrected, args.out)
    changed = sum(
        1 for a, b in zip(reads, corrected) if a.sequence != b.sequence
    )
    _write_config(cfg, args.out + ".config.json")
    _emit({"reads": len(corrected), "value": value, "changed_reads": changed})
    _say(f"corrected {changed}/{len(corrected)} reads at value {value}")
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    cfg = _resolve(
        args,
        {
            "lm": "ngram",
            "word_len": ngram.DEFAULT_WORD_LEN,
            "history": ngram.DEFAULT_HISTORY,
            "p_floor": ngram.DEFAULT_P_FLOOR,
            "layers": 2,
            "hidden": 32,
            "epochs": 10,
            "minibatch": 200,
            "learning_rate": 2e-3,
            "unroll": 50,
            "k_min": 9,
            "k_max": 25,
            "delta": 2,
            "iter_max": 30,
            "initials": None,
            "sample_n": 2000,
            "seed": 0,
            "threads": 1,
            **_CORRECTOR_DEFAULTS,
        },
    )
    reads = load_reads(args.reads)
    os.makedirs(args.out_dir, exist_ok=True)
    _say(f"training {cfg['lm']} model on {len(reads)} reads")
    if cfg["lm"] == "ngram":
        lm = ngram.train_reads(
            reads,
            word_len=cfg["word_len"],
            history=cfg["history"],
            p_floor=cfg["p_floor"],
            threads=cfg["threads"],
        )
    elif cfg["lm"] == "charrnn":
        lm, _ = charrnn.train(reads, _rnn_config(cfg), seed=cfg["seed"])
    else:
        raise ValueError(f"unknown language model kind {cfg['lm']!r}")
    initials = cfg["initials"]
    if isinstance(initials, str):
        initials = _int_list(initials)
    elif isinstance(initials, list):
        initials = tuple(int(v) for v in initials)
    space = tuner.SearchSpace(
        lower=cfg["k_min"],
        upper=cfg["k_max"],
        step=cfg["delta"],
        iter_max=cfg["iter_max"],
        initials=initials,
    )
    corrector = _make_corrector(cfg)
    _say(
        f"searching [{space.lower}, {space.upper}] step {space.step} "
        f"from {space.start_points()}"
    )
    result = tuner.tune(
        reads,
        lm,
        corrector,
        space,
        sample_n=cfg["sample_n"],
        seed=cfg["seed"],
        threads=cfg["threads"],
    )
    corrected_path = os.path.join(args.out_dir, "corrected.fastq")
    write_fastq(result.corrected, corrected_path)
    search_payload = {
        "best_value": result.best_value,
        "evaluations": result.evaluations,
        "searches": [s.to_dict() for s in result.searches],
    }
    with open(os.path.join(args.out_dir, "search.json"), "w") as fh:
        fh.write(json.dumps(search_payload, sort_keys=True, indent=2) + "\n")
    _write_config(cfg, os.path.join(args.out_dir, "config.json"))
    _emit(
        {
            "best_value": result.best_value,
            "evaluations": result.evaluations,
            "terminations": [s.termination for s in result.searches],
            "corrected": corrected_path,
        }
    )
    _say(f"best value {result.best_value} after {result.evaluations} evaluations")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _resolve(
        args,
        {
            "values": None,
            "k_min": 9,
            "k_max": 25,
            "k_step": 2,
            "word_len": ngram.DEFAULT_WORD_LEN,
            "history": ngram.DEFAULT_HISTORY,
            "p_floor": ngram.DEFAULT_P_FLOOR,
            "seed": 0,
            "threads": 1,
            **_CORRECTOR_DEFAULTS,
        },
    )
    reads = load_reads(args.reads)
    truth = load_reads(args.truth) if args.truth else None
    values = cfg["values"]
    if isinstance(values, str):
        values = _int_list(values)
    if values is None:
        values = range(cfg["k_min"], cfg["k_max"] + 1, cfg["k_step"])
    ngram_lm = None
    rnn_lm = None
    if args.model:
        model = _load_model(args.model)
        if isinstance(model, ngram.NgramModel):
            ngram_lm = model
        else:
            rnn_lm = model
    else:
        _say(f"training n-gram model on {len(reads)} reads")
        ngram_lm = ngram.train_reads(
            reads,
            word_len=cfg["word_len"],
            history=cfg["history"],
            p_floor=cfg["p_floor"],
            threads=cfg["threads"],
        )
    if args.rnn_model:
        rnn_lm = charrnn.RnnLm.load(args.rnn_model)
    corrector = _make_corrector(cfg)
    report = metrics.sweep(
        reads,
        corrector,
        values,
        ngram_lm=ngram_lm,
        rnn_lm=rnn_lm,
        truth=truth,
        threads=cfg["threads"],
    )
    sys.stdout.write(report.to_tsv())
    if args.tsv_out:
        with open(args.tsv_out, "w") as fh:
            fh.write(report.to_tsv())
        _write_config(cfg, args.tsv_out + ".config.json")
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(report.to_json())
        if not args.tsv_out:
            _write_config(cfg, args.json_out + ".config.json")
    for key, r in sorted(report.correlations.items()):
        _say(f"correlation {key}: {r:+.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    original = load_reads(args.original)
    corrected = load_reads(args.corrected)
    truth = load_reads(args.truth)
    gain = ecsim.ec_gain(original, corrected, truth)
    _emit({"gain": gain})
    return 0


# -- parser ---------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--seed", type=int, help="PRNG seed (default 0)")
    p.add_argument("--threads", type=int, help="worker threads (default 1)")


def _add_corrector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solid-min", type=int, dest="solid_min",
                   help="solid k-mer count threshold (default 3)")
    p.add_argument("--max-edits", type=int, dest="max_edits",
                   help="edit budget per read (default 2)")
    p.add_argument("--adapter-template", dest="adapter_template",
                   help="external tool command with {input} {output} and {k} or {GL}")
    p.add_argument("--adapter-param", dest="adapter_param", choices=("k", "GL"),
                   help="which placeholder the tool takes (default k)")
    p.add_argument("--timeout", type=float, help="external tool timeout in seconds")


def _add_ngram_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--word-len", type=int, dest="word_len",
                   help="segment word length (default 7)")
    p.add_argument("--history", type=int, help="words of history (default 3)")
    p.add_argument("--p-floor", type=float, dest="p_floor",
                   help="probability floor (default 1e-7)")


def _add_rnn_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layers", type=int, help="recurrent layers (default 2)")
    p.add_argument("--hidden", type=int, help="neurons per layer (default 32)")
    p.add_argument("--epochs", type=int, help="training epochs (default 10)")
    p.add_argument("--minibatch", type=int, help="reads per batch (default 200)")
    p.add_argument("--learning-rate", type=float, dest="learning_rate",
                   help="SGD learning rate (default 2e-3)")
    p.add_argument("--unroll", type=int, help="BPTT unroll length (default 50)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ectuner",
        description="Tune error-correction parameters with read language models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a language model on reads")
    p.add_argument("--reads", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--lm", choices=("ngram", "charrnn"))
    _add_ngram_flags(p)
    _add_rnn_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("perplexity", help="score reads with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--reads", required=True)
    p.add_argument("--sample-n", type=int, dest="sample_n",
                   help="score a uniform sample of this many reads")
    _add_common(p)
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("inject", help="corrupt reads with synthetic errors")
    p.add_argument("--reads", required=True)
    p.add_argument("--out", required=True, help="corrupted FASTQ to write")
    p.add_argument("--ledger", help="TSV ledger of applied changes")
    p.add_argument("--kind",
                   choices=("deletion", "insertion", "substitution", "mixture"))
    p.add_argument("--regime", choices=("low", "high"))
    _add_common(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("correct", help="run the built-in or an external corrector")
    p.add_argument("--reads", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, help="k-mer size for the built-in corrector")
    p.add_argument("--param-value", type=int, dest="param_value",
                   help="tunable value passed to an external tool")
    _add_corrector_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("tune", help="search for the best correction parameter")
    p.add_argument("--reads", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--lm", choices=("ngram", "charrnn"))
    p.add_argument("--k-min", type=int, dest="k_min")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--delta", type=int, help="neighbor step size (default 2)")
    p.add_argument("--iter-max", type=int, dest="iter_max",
                   help="move budget per restart (default 30)")
    p.add_argument("--initials", help="comma-separated starting values")
    p.add_argument("--sample-n", type=int, dest="sample_n",
                   help="search sample size (default 2000)")
    _add_ngram_flags(p)
    _add_rnn_flags(p)
    _add_corrector_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("sweep", help="evaluate a range of parameter values")
    p.add_argument("--reads", required=True)
    p.add_argument("--truth", help="clean reads for gain computation")
    p.add_argument("--model", help="trained model file (default: train n-gram)")
    p.add_argument("--rnn-model", dest="rnn_model",
                   help="additional RNN model to score with")
    p.add_argument("--values", help="comma-separated parameter values")
    p.add_argument("--k-min", type=int, dest="k_min")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--k-step", type=int, dest="k_step")
    p.add_argument("--tsv-out", dest="tsv_out")
    p.add_argument("--json-out", dest="json_out")
    _add_ngram_flags(p)
    _add_corrector_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="per-base correction gain against truth")
    p.add_argument("--original", required=True, help="uncorrected reads")
    p.add_argument("--corrected", required=True)
    p.add_argument("--truth", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        name = getattr(exc, "filename", None) or exc
        print(f"ectuner: input not found: {name}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"ectuner: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
