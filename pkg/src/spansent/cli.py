"""Command-line interface: train / evaluate / extract / bias-report / gen-data.

Values resolve as: built-in defaults < config file < command-line flags.
The fully resolved configuration is echoed to `<out_dir>/resolved.cfg`, and
re-running the same command from that file reproduces the outputs
bit-exactly.
"""
from __future__ import annotations

import argparse
import configparser
import difflib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .aligner import FileTeacher, FileTreeDistance, LinearDistance
from .antibias import PriorLexicon, load_lexicon, save_lexicon
from .data import SyntheticSpec, build_vocab, class_counts, gen_synthetic, load_dataset, save_dataset
from .encoder import EncoderConfig
from .errors import ConfigError, ContractError, DataError, NotFoundError, NumericError, SpanSentError
from .evaluation import bias_report_for, evaluate
from .labels import SentimentLabel
from .model import TrainConfig, dummy_rank, extract_opinion, load_model, parse_alpha, predict, save_model
from .training import train

COMMANDS = ("train", "evaluate", "extract", "bias-report", "gen-data")

# section -> key -> (type, default). Booleans accept true/false in files.
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "run": {
        "seed": (int, 0),
        "out_dir": (str, "runs/latest"),
    },
    "paths": {
        "dataset": (str, None),
        "lexicon": (str, None),
        "checkpoint": (str, None),
        "teacher_file": (str, None),
        "tree_distance_file": (str, None),
        "output": (str, None),
    },
    "train": {
        "batch_size": (int, 16),
        "epochs": (int, 10),
        "max_span_width": (int, 15),
        "alpha": (str, "1/3"),
        "beta": (float, 0.05),
        "gamma": (float, 1.0),
        "delta": (str, "1/m"),
        "lr_ptm": (float, 1e-3),
        "lr_others": (float, 2e-3),
        "eval_each_epoch": (bool, True),
    },
    "encoder": {
        "model_dim": (int, 32),
        "layers": (int, 2),
        "heads": (int, 4),
        "max_seq_len": (int, 64),
        "dropout": (float, 0.0),
        "min_freq": (int, 1),
    },
    "ablation": {
        "no_adv": (bool, False),
        "no_aligner": (bool, False),
        "no_distill": (bool, False),
        "no_sentiment_score": (bool, False),
        "neutral_reinforce": (bool, False),
    },
    "synthetic": {
        "count": (int, 2000),
        "bias_rate": (float, 0.0),
        "no_opinion_neutral_rate": (float, 1.0),
        "plain_polar_rate": (float, 0.15),
        "double_aspect_rate": (float, 0.1),
    },
    "extract": {
        "top_n": (int, 3),
    },
}

_FLAG_TO_KEY = {
    key: (section, key) for section, keys in SCHEMA.items() for key in keys
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems become exit code 1, not 2
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="spansent", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", help="key=value config file with sections")
        for section, keys in SCHEMA.items():
            for key, (typ, _default) in keys.items():
                flag = "--" + key.replace("_", "-")
                if typ is bool:
                    p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
                else:
                    p.add_argument(flag, dest=key, type=typ, default=None)
    return parser


def _coerce(section: str, key: str, raw: str):
    typ, _ = SCHEMA[section][key]
    if typ is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def _suggest(bad: str, candidates) -> str:
    close = difflib.get_close_matches(bad, list(candidates), n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def read_config_file(path: str | Path) -> dict[tuple[str, str], object]:
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    values: dict[tuple[str, str], object] = {}
    for section in parser.sections():
        if section == "run" and "command" in parser[section]:
            pass  # informational echo from a previous run
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]{_suggest(section, SCHEMA)}")
        for key, raw in parser[section].items():
            if section == "run" and key == "command":
                continue
            if key not in SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]{_suggest(key, SCHEMA[section])}"
                )
            values[(section, key)] = _coerce(section, key, raw)
    return values


@dataclass
class CliConfig:
    command: str
    values: dict[tuple[str, str], object]

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    def require_path(self, key: str) -> str:
        value = self.get("paths", key)
        if value is None:
            raise ConfigError(f"command {self.command!r} requires --{key.replace('_', '-')}")
        return str(value)

    def train_config(self) -> TrainConfig:
        delta = str(self.get("train", "delta")).strip()
        if delta in ("1/m", "one_over_m"):
            delta_mode, delta_value = "one_over_m", 1.0
        else:
            try:
                delta_mode, delta_value = "fixed", float(delta)
            except ValueError:
                raise ConfigError(f"delta must be '1/m' or a number, got {delta!r}") from None
        try:
            alpha = parse_alpha(str(self.get("train", "alpha")))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse alpha: {exc}") from exc
        try:
            return TrainConfig(
                batch_size=self.get("train", "batch_size"),
                epochs=self.get("train", "epochs"),
                max_span_width=self.get("train", "max_span_width"),
                alpha=alpha,
                beta=self.get("train", "beta"),
                gamma=self.get("train", "gamma"),
                delta_mode=delta_mode,
                delta_value=delta_value,
                seed=self.get("run", "seed"),
                lr_ptm=self.get("train", "lr_ptm"),
                lr_others=self.get("train", "lr_others"),
                no_adv=self.get("ablation", "no_adv"),
                no_aligner=self.get("ablation", "no_aligner"),
                no_distill=self.get("ablation", "no_distill"),
                no_sentiment_score=self.get("ablation", "no_sentiment_score"),
                neutral_reinforce=self.get("ablation", "neutral_reinforce"),
                eval_each_epoch=self.get("train", "eval_each_epoch"),
            )
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_text(self) -> str:
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            if section == "run":
                lines.append(f"command = {self.command}")
            for key in SCHEMA[section]:
                value = self.values[(section, key)]
                if value is None:
                    continue
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def parse_config(argv: list[str]) -> CliConfig:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    values: dict[tuple[str, str], object] = {
        (section, key): default
        for section, keys in SCHEMA.items()
        for key, (_typ, default) in keys.items()
    }
    if ns.config:
        values.update(read_config_file(ns.config))
    for key, target in _FLAG_TO_KEY.items():
        flag_value = getattr(ns, key, None)
        if flag_value is not None:
            values[target] = flag_value
    return CliConfig(command=ns.command, values=values)


def _write_outputs(config: CliConfig, out_dir: Path, extra_files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved.cfg").write_text(config.resolved_text(), encoding="utf-8")
    for name, content in extra_files.items():
        (out_dir / name).write_text(content, encoding="utf-8")


def _load_common(config: CliConfig):
    records = load_dataset(config.require_path("dataset"), config.get("encoder", "max_seq_len"))
    if not records:
        raise DataError("dataset contains no usable records")
    tree_file = config.get("paths", "tree_distance_file")
    distance = FileTreeDistance(tree_file) if tree_file else LinearDistance()
    return records, distance


def _cmd_train(config: CliConfig) -> int:
    records, distance = _load_common(config)
    lex_path = config.get("paths", "lexicon")
    lexicon = load_lexicon(lex_path) if lex_path else PriorLexicon()
    teacher_path = config.get("paths", "teacher_file")
    teacher = FileTeacher(teacher_path) if teacher_path else None
    vocab = build_vocab(records, min_freq=config.get("encoder", "min_freq"))
    encoder_config = EncoderConfig(
        vocab_size=vocab.size,
        model_dim=config.get("encoder", "model_dim"),
        layers=config.get("encoder", "layers"),
        heads=config.get("encoder", "heads"),
        max_seq_len=config.get("encoder", "max_seq_len"),
        dropout=config.get("encoder", "dropout"),
    )
    train_config = config.train_config()
    out_dir = Path(config.get("run", "out_dir"))
    counts = class_counts(records)
    print(
        "training on "
        f"{len(records)} sentences, aspects per class: "
        + " ".join(f"{label.as_string()}={counts[label]}" for label in SentimentLabel)
    )
    result = train(
        records,
        train_config,
        encoder_config=encoder_config,
        vocab=vocab,
        lexicon=lexicon,
        teacher=teacher,
        distance=distance,
        checkpoint_dir=out_dir / "checkpoints",
    )
    save_model(out_dir / "checkpoint.json", result.params)
    log_lines = "\n".join(json.dumps(st.as_dict(), sort_keys=True) for st in result.history)
    _write_outputs(config, out_dir, {"epochs.jsonl": log_lines + "\n"})
    last = result.history[-1]
    if last.train_accuracy is not None:
        print(f"final train accuracy={last.train_accuracy:.4f} macro_f1={last.train_macro_f1:.4f}")
    print(f"checkpoint written to {out_dir / 'checkpoint.json'}")
    return 0


def _cmd_evaluate(config: CliConfig) -> int:
    records, distance = _load_common(config)
    params = load_model(config.require_path("checkpoint"))
    result = evaluate(records, params, config.train_config(), distance=distance)
    report = result.report()
    print(report, end="")
    _write_outputs(config, Path(config.get("run", "out_dir")), {"metrics.txt": report})
    return 0


def _cmd_extract(config: CliConfig) -> int:
    records, distance = _load_common(config)
    params = load_model(config.require_path("checkpoint"))
    top_n = config.get("extract", "top_n")
    if top_n < 1:
        raise ConfigError(f"top_n must be at least 1, got {top_n}")
    predictions = predict(records, params, config.train_config(), distance=distance)
    lines = []
    for pred in predictions:
        record = pred.record
        aspect = pred.aspect
        entry = {
            "sentence_id": record.sentence_id,
            "aspect": {
                "s": aspect.start,
                "e": aspect.end,
                "text": record.span_text(aspect.span),
            },
            "label": pred.label.as_string(),
            "distribution": [float(x) for x in pred.distribution],
        }
        if pred.dependency is not None:
            ranked = []
            for span, score in extract_opinion(pred.dependency, top_n):
                if span is None:
                    ranked.append({"dummy": True, "score": score})
                else:
                    chars = record.span_chars((span.start, span.end))
                    ranked.append(
                        {
                            "s": span.start,
                            "e": span.end,
                            "text": record.span_text((span.start, span.end)),
                            "char_start": chars[0],
                            "char_end": chars[1],
                            "score": score,
                        }
                    )
            entry["opinions"] = ranked
            entry["dummy_rank"] = dummy_rank(pred.dependency)
        lines.append(json.dumps(entry, sort_keys=True))
    out_dir = Path(config.get("run", "out_dir"))
    output = config.get("paths", "output")
    dump = "\n".join(lines) + "\n"
    _write_outputs(config, out_dir, {})
    target = Path(output) if output else out_dir / "predictions.jsonl"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dump, encoding="utf-8")
    print(f"wrote {len(lines)} aspect predictions to {target}")
    return 0


def _cmd_bias_report(config: CliConfig) -> int:
    records, distance = _load_common(config)
    params = load_model(config.require_path("checkpoint"))
    lexicon = load_lexicon(config.require_path("lexicon"))
    predictions = predict(records, params, config.train_config(), distance=distance)
    report = bias_report_for(predictions, lexicon)
    ratio = "undefined (S is empty)" if report.ratio is None else f"{report.ratio:.6f}"
    text = f"S={report.s_count}\nQ={report.q_count}\nratio={ratio}\n"
    print(text, end="")
    _write_outputs(config, Path(config.get("run", "out_dir")), {"bias_report.txt": text})
    return 0


def _cmd_gen_data(config: CliConfig) -> int:
    spec = SyntheticSpec(
        bias_rate=config.get("synthetic", "bias_rate"),
        no_opinion_neutral_rate=config.get("synthetic", "no_opinion_neutral_rate"),
        plain_polar_rate=config.get("synthetic", "plain_polar_rate"),
        double_aspect_rate=config.get("synthetic", "double_aspect_rate"),
    )
    count = config.get("synthetic", "count")
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    records = gen_synthetic(spec, count, seed=config.get("run", "seed"))
    output = config.get("paths", "output")
    out_dir = Path(config.get("run", "out_dir"))
    target = Path(output) if output else out_dir / "synthetic.jsonl"
    target.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(target, records)
    lexicon = PriorLexicon(entries=spec.lexicon_entries())
    lex_target = target.with_suffix(".lexicon.tsv")
    save_lexicon(lex_target, lexicon)
    _write_outputs(config, out_dir, {})
    counts = class_counts(records)
    print(
        f"wrote {len(records)} sentences to {target} "
        f"(aspects: " + " ".join(f"{l.as_string()}={counts[l]}" for l in SentimentLabel) + ")"
    )
    print(f"matching prior lexicon written to {lex_target}")
    return 0


_DISPATCH = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "extract": _cmd_extract,
    "bias-report": _cmd_bias_report,
    "gen-data": _cmd_gen_data,
}


def run(config: CliConfig) -> int:
    return _DISPATCH[config.command](config)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
        return run(config)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, NotFoundError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except SpanSentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
