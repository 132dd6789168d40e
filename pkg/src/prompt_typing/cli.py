"""Command-line entry point for the full pipeline.

Subcommands: prepare-verbalizer, sample-fewshot, generate-pairs, train,
pretrain-selfsup, evaluate, predict, report-types.  Machine-readable
results go to standard output, logs to standard error, and every run
writes a manifest recording the resolved configuration, seeds, input
file hashes, output paths, and wall-clock time.

Exit codes: 0 success, 2 usage or configuration error, 3 data or
validation error, 4 backend capability error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import re
import sys
import time
from pathlib import Path

from . import __version__
from .datasets import (
    TypingDataset,
    load_dataset,
    sample_fewshot_train_dev,
    save_dataset,
)
from .errors import (
    CapabilityError,
    ConfigurationError,
    DataError,
    DegenerateScoreError,
    EncodeError,
    PairGenerationError,
    PromptTypingError,
    RenderError,
    SchemaError,
    TrainingError,
)
from .metrics import evaluate, per_type_report, report_to_csv
from .mlm_backend import ToyMlmBackend, ToyRuleTable
from .schema_verbalizer import (
    EntityType,
    LabelSchema,
    RelatedWordSource,
    Verbalizer,
    build_verbalizer,
    parse_label_schema,
)
from .selfsup import (
    SelfSupConfig,
    TypeDictionary,
    generate_pairs,
    load_linked_corpus,
    pretrain,
    read_pairs,
    write_pairs,
)
from .templates import TemplateSpec, render
from .training import TrainConfig, load_checkpoint, save_checkpoint, train
from .typing_model import ft_scores, score_types

logger = logging.getLogger("prompt_typing.cli")

_RESERVED_TOKEN = re.compile(r"^\[(MASK|Hide|P\d*)\]$")


def _is_reserved(token: str) -> bool:
    return bool(_RESERVED_TOKEN.match(token))


# ----------------------------------------------------------------------
# Shared plumbing


def _sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    path: Path,
    subcommand: str,
    config: dict,
    seeds: dict,
    inputs: list[str | Path],
    outputs: list[str | Path],
    started: float,
) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seeds": seeds,
        "input_hashes": {str(p): _sha256(p) for p in inputs},
        "output_paths": [str(p) for p in outputs],
        "wall_clock_seconds": time.monotonic() - started,
        "artifact_version": __version__,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _load_toml(path: str | Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _load_schema(path: str | Path) -> LabelSchema:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        labels = raw.get("labels")
        separator = raw.get("separator", "/")
        name = raw.get("name", Path(path).stem)
    else:
        labels, separator, name = raw, "/", Path(path).stem
    if not isinstance(labels, list):
        raise SchemaError(f"schema file {path} must hold a list of labels")
    return parse_label_schema([str(x) for x in labels], separator=separator, name=name)


def _resolve_verbalizer(args, schema: LabelSchema, inputs: list) -> Verbalizer:
    if getattr(args, "verbalizer", None):
        inputs.append(args.verbalizer)
        return Verbalizer.load(args.verbalizer, schema=schema)
    source = None
    k = getattr(args, "expansion_k", 0) or 0
    if getattr(args, "related_words", None):
        inputs.append(args.related_words)
        source = RelatedWordSource.from_file(args.related_words)
    return build_verbalizer(schema, source=source, expansion_k=k)


def _resolve_rules(args, inputs: list) -> ToyRuleTable:
    if getattr(args, "backend_rules", None):
        inputs.append(args.backend_rules)
        return ToyRuleTable.from_file(args.backend_rules)
    return ToyRuleTable()


def _collect_words(
    datasets: list[TypingDataset],
    verbalizer: Verbalizer,
    template: TemplateSpec | None = None,
    extra_token_lists: list[tuple[str, ...]] | None = None,
) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()

    def add(token: str) -> None:
        if token not in seen and not _is_reserved(token):
            seen.add(token)
            words.append(token)

    for ds in datasets:
        for ex in ds:
            for tok in ex.tokens:
                add(tok)
    if extra_token_lists:
        for tokens in extra_token_lists:
            for tok in tokens:
                add(tok)
    specs = [template] if template is not None else []
    specs.append(TemplateSpec.hard("t3"))
    for spec in specs:
        for tok in spec.static_tokens():
            add(tok)
    for w in verbalizer.union_vocabulary:
        add(w)
    return words


def _manifest_path(args, default_base: Path) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    return default_base


def _jsonl_token_lists(path: str | Path) -> list[tuple[str, ...]]:
    """Token lists from any JSONL file whose rows carry a "tokens" field."""
    out: list[tuple[str, ...]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if isinstance(row, dict) and isinstance(row.get("tokens"), list):
                out.append(tuple(str(t) for t in row["tokens"]))
    return out


# ----------------------------------------------------------------------
# Subcommands


def _cmd_prepare_verbalizer(args) -> int:
    started = time.monotonic()
    inputs: list = [args.schema]
    schema = _load_schema(args.schema)
    source = None
    if args.related_words:
        inputs.append(args.related_words)
        source = RelatedWordSource.from_file(args.related_words)
    v = build_verbalizer(schema, source=source, expansion_k=args.expansion_k)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    v.save(out)
    print(json.dumps({"out": str(out), "types": len(schema), "union_size": len(v.union_vocabulary)}))
    _write_manifest(
        _manifest_path(args, out.with_name(out.name + ".manifest.json")),
        "prepare-verbalizer",
        {"expansion_k": args.expansion_k},
        {},
        inputs,
        [out],
        started,
    )
    return 0


def _cmd_sample_fewshot(args) -> int:
    started = time.monotonic()
    inputs: list = [args.data]
    schema = None
    if args.schema:
        inputs.append(args.schema)
        schema = _load_schema(args.schema)
    pool = load_dataset(args.data, fmt=args.format, schema=schema)
    train_ds, dev_ds = sample_fewshot_train_dev(pool, args.k, args.seed)
    out_train, out_dev = Path(args.out_train), Path(args.out_dev)
    out_train.parent.mkdir(parents=True, exist_ok=True)
    out_dev.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(train_ds, out_train)
    save_dataset(dev_ds, out_dev)
    print(
        json.dumps(
            {"train": str(out_train), "dev": str(out_dev), "per_split": len(train_ds)}
        )
    )
    _write_manifest(
        _manifest_path(args, out_train.with_name(out_train.name + ".manifest.json")),
        "sample-fewshot",
        {"k": args.k, "format": args.format},
        {"seed": args.seed},
        inputs,
        [out_train, out_dev],
        started,
    )
    return 0


def _cmd_generate_pairs(args) -> int:
    started = time.monotonic()
    inputs: list = [args.corpus, args.dict]
    corpus = load_linked_corpus(args.corpus)
    type_dict = TypeDictionary.from_file(args.dict)
    cfg = SelfSupConfig(c=args.count, alpha=args.alpha, seed=args.seed)
    dataset = generate_pairs(
        corpus, type_dict, cfg, n_shards=args.shards, parallel=args.parallel
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pairs(out, dataset)
    hidden = sum(p.a.hidden + p.b.hidden for p in dataset)
    print(
        json.dumps(
            {
                "out": str(out),
                "pairs": len(dataset),
                "hidden_fraction": hidden / (2 * len(dataset)),
            }
        )
    )
    _write_manifest(
        _manifest_path(args, out.with_name(out.name + ".manifest.json")),
        "generate-pairs",
        {"count": args.count, "alpha": args.alpha, "shards": args.shards},
        {"seed": args.seed},
        inputs,
        [out],
        started,
    )
    return 0


def _template_from_args(name: str, soft_len: int) -> TemplateSpec:
    if name == "soft":
        return TemplateSpec.soft(soft_len)
    return TemplateSpec.hard(name)


def _cmd_train(args) -> int:
    started = time.monotonic()
    inputs: list = [args.train, args.test]
    file_cfg = {}
    if args.config:
        inputs.append(args.config)
        file_cfg = _load_toml(args.config).get("train", {})

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    template = _template_from_args(
        pick(args.template, "template", "t3"), pick(args.soft_len, "soft_len", 2)
    )
    config = TrainConfig(
        mode=pick(args.mode, "mode", "prompt"),
        template=template,
        learning_rate=float(pick(args.learning_rate, "learning_rate", 5e-5)),
        batch_size=int(pick(args.batch_size, "batch_size", 16)),
        epochs=int(pick(args.epochs, "epochs", 30)),
        eval_every_steps=int(pick(args.eval_every_steps, "eval_every_steps", 25)),
        seed=int(pick(args.seed, "seed", 0)),
        lambda_learnable=bool(pick(args.lambda_learnable or None, "lambda_learnable", False)),
        weight_decay=float(file_cfg.get("weight_decay", 0.01)),
        clip_norm=float(file_cfg.get("clip_norm", 1.0)),
    )

    schema = None
    if args.schema:
        inputs.append(args.schema)
        schema = _load_schema(args.schema)
    train_pool = load_dataset(args.train, fmt=args.format, schema=schema)
    schema = train_pool.schema
    test_ds = load_dataset(args.test, fmt=args.format, schema=schema)
    if args.shots:
        train_ds, dev_ds = sample_fewshot_train_dev(train_pool, args.shots, config.seed)
    elif args.dev:
        inputs.append(args.dev)
        train_ds = train_pool
        dev_ds = load_dataset(args.dev, fmt=args.format, schema=schema)
    else:
        raise ConfigurationError("either --shots or --dev is required")

    verbalizer = _resolve_verbalizer(args, schema, inputs)
    rules = _resolve_rules(args, inputs)
    backend = ToyMlmBackend(rules=rules)
    words = _collect_words([train_ds, dev_ds, test_ds], verbalizer, template)
    state = backend.build_state(words, seed=config.seed)

    result = train(config, train_ds, dev_ds, test_ds, verbalizer, backend, state)

    out_dir = Path(args.out_dir)
    save_checkpoint(out_dir, backend, result)
    report_obj = result.report.to_json_obj()
    (out_dir / "report.json").write_text(
        json.dumps(report_obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(json.dumps(report_obj))
    _write_manifest(
        _manifest_path(args, out_dir / "manifest.json"),
        "train",
        {
            "mode": config.mode,
            "template": args.template or file_cfg.get("template", "t3"),
            "soft_len": config.template.soft_length,
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size,
            "epochs": config.epochs,
            "eval_every_steps": config.eval_every_steps,
            "lambda_learnable": config.lambda_learnable,
            "shots": args.shots,
            "format": args.format,
        },
        {"seed": config.seed},
        inputs,
        [out_dir],
        started,
    )
    return 0


def _cmd_pretrain_selfsup(args) -> int:
    started = time.monotonic()
    inputs: list = [args.pairs, args.schema]
    file_cfg = {}
    if args.config:
        inputs.append(args.config)
        file_cfg = _load_toml(args.config).get("selfsup", {})

    pairs = read_pairs(args.pairs)
    schema = _load_schema(args.schema)
    verbalizer = _resolve_verbalizer(args, schema, inputs)
    rules = _resolve_rules(args, inputs)
    backend = ToyMlmBackend(rules=rules)

    cfg = SelfSupConfig(
        c=max(1, len(pairs) // 2),
        alpha=0.4,
        gamma=float(args.gamma if args.gamma is not None else file_cfg.get("gamma", 0.5)),
        seed=int(args.seed if args.seed is not None else file_cfg.get("seed", 0)),
        learning_rate=float(
            args.learning_rate
            if args.learning_rate is not None
            else file_cfg.get("learning_rate", 5e-5)
        ),
        batch_size=int(file_cfg.get("batch_size", 16)),
        epochs=int(args.epochs if args.epochs is not None else file_cfg.get("epochs", 1)),
    )

    side_tokens = [p.a.text_tokens for p in pairs] + [p.b.text_tokens for p in pairs]
    for extra in args.extra_vocab or []:
        inputs.append(extra)
        side_tokens.extend(_jsonl_token_lists(extra))
    words = _collect_words([], verbalizer, extra_token_lists=side_tokens)
    state = backend.build_state(words, seed=cfg.seed)
    result = pretrain(cfg, pairs, verbalizer, backend, state)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend.save_state(result.state, out_dir / "encoder")
    verbalizer.save(out_dir / "verbalizer.json")
    summary = {
        "steps": len(result.step_losses),
        "first_loss": result.step_losses[0],
        "last_loss": result.step_losses[-1],
        "out": str(out_dir),
    }
    print(json.dumps(summary))
    _write_manifest(
        _manifest_path(args, out_dir / "manifest.json"),
        "pretrain-selfsup",
        {"gamma": cfg.gamma, "learning_rate": cfg.learning_rate, "epochs": cfg.epochs},
        {"seed": cfg.seed},
        inputs,
        [out_dir],
        started,
    )
    return 0


def _load_predictions(path: str | Path) -> dict[str, str]:
    preds: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                preds[str(row["id"])] = str(row["predicted_type"])
            except (KeyError, TypeError, json.JSONDecodeError) as e:
                raise DataError(f"malformed prediction row at line {lineno}: {e}") from None
    if not preds:
        raise DataError(f"prediction file {path} has no rows")
    return preds


def _aligned_pairs(args, inputs: list) -> tuple[list[EntityType], list[EntityType]]:
    inputs.extend([args.pred, args.gold])
    preds = _load_predictions(args.pred)
    gold_ds = load_dataset(args.gold, fmt=args.format)
    exclude = set(args.exclude_gold_type or [])
    pred_types: list[EntityType] = []
    gold_types: list[EntityType] = []
    for ex in gold_ds:
        if ex.gold_type.canonical_id in exclude:
            continue
        if ex.id not in preds:
            raise DataError(f"no prediction for example id {ex.id!r}")
        pred_types.append(EntityType.parse(preds[ex.id]))
        gold_types.append(ex.gold_type)
    if not gold_types:
        raise DataError("no examples left to evaluate after exclusions")
    return pred_types, gold_types


def _cmd_evaluate(args) -> int:
    started = time.monotonic()
    inputs: list = []
    pred_types, gold_types = _aligned_pairs(args, inputs)
    result = evaluate(pred_types, gold_types, macro_f1_per_example=args.macro_per_example)
    print(json.dumps(result.to_json_obj()))
    _write_manifest(
        _manifest_path(args, Path("evaluate-manifest.json")),
        "evaluate",
        {
            "format": args.format,
            "exclude_gold_type": sorted(args.exclude_gold_type or []),
            "macro_per_example": args.macro_per_example,
        },
        {},
        inputs,
        [],
        started,
    )
    return 0


def _cmd_report_types(args) -> int:
    started = time.monotonic()
    inputs: list = []
    pred_types, gold_types = _aligned_pairs(args, inputs)
    report = per_type_report(pred_types, gold_types)
    csv_text = report_to_csv(report)
    outputs: list = []
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(csv_text, encoding="utf-8")
        outputs.append(out)
        print(json.dumps({"out": str(out), "types": len(report)}))
    else:
        sys.stdout.write(csv_text)
    _write_manifest(
        _manifest_path(
            args, outputs[0].with_name(outputs[0].name + ".manifest.json")
            if outputs
            else Path("report-types-manifest.json")
        ),
        "report-types",
        {"format": args.format},
        {},
        inputs,
        outputs,
        started,
    )
    return 0


def _cmd_predict(args) -> int:
    started = time.monotonic()
    inputs: list = [args.data]

    if args.checkpoint:
        backend, state, head, verbalizer = load_checkpoint(args.checkpoint)
        schema = parse_label_schema(
            [t.canonical_id for t in verbalizer.types], separator="/"
        )
        data = load_dataset(args.data, fmt=args.format, schema=schema)
    else:
        if not args.schema:
            raise ConfigurationError("predict needs --checkpoint or --schema")
        inputs.append(args.schema)
        schema = _load_schema(args.schema)
        data = load_dataset(args.data, fmt=args.format, schema=schema)
        verbalizer = _resolve_verbalizer(args, schema, inputs)
        rules = _resolve_rules(args, inputs)
        backend = ToyMlmBackend(rules=rules)
        head = None
        state = None  # built below once the template is known

    template = _template_from_args(args.template, args.soft_len)
    if state is None:
        words = _collect_words([data], verbalizer, template)
        state = backend.build_state(words, seed=args.seed)
    if template.kind == "soft":
        _, state = backend.register_special_tokens(
            state, list(template.soft_token_names), seed=args.seed
        )

    mode = args.mode
    if mode == "ft" and head is None:
        raise ConfigurationError("ft prediction requires a checkpoint with a head")

    rows = []
    for ex in data:
        if mode == "ft":
            scores = ft_scores(ex, head, backend, state)
        else:
            d = backend.mask_distribution(render(template, ex), state)
            scores = score_types(d, verbalizer)
        pred = scores.argmax()
        rows.append(
            {
                "id": ex.id,
                "predicted_type": pred.canonical_id,
                "normalized_scores": scores.as_id_dict(),
            }
        )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(json.dumps({"out": str(out), "n": len(rows)}))
    if args.checkpoint:
        inputs.append(Path(args.checkpoint) / "encoder" / "weights.bin")
    _write_manifest(
        _manifest_path(args, out.with_name(out.name + ".manifest.json")),
        "predict",
        {"template": args.template, "mode": mode, "format": args.format},
        {"seed": args.seed},
        inputs,
        [out],
        started,
    )
    return 0


# ----------------------------------------------------------------------
# Parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prompt-typing",
        description="Prompt-learning pipeline for fine-grained entity typing.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("prepare-verbalizer", help="build and save a verbalizer")
    p.add_argument("--schema", required=True)
    p.add_argument("--related-words", default=None)
    p.add_argument("--expansion-k", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(fn=_cmd_prepare_verbalizer)

    p = sub.add_parser("sample-fewshot", help="draw disjoint k-shot train/dev splits")
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="canonical", choices=["canonical", "fewnerd", "ontonotes", "bbn"])
    p.add_argument("--schema", default=None)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-dev", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(fn=_cmd_sample_fewshot)

    p = sub.add_parser("generate-pairs", help="mine positive/negative prompted pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--count", type=int, required=True, help="pairs per polarity")
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(fn=_cmd_generate_pairs)

    p = sub.add_parser("train", help="supervised or few-shot tuning")
    p.add_argument("--mode", choices=["ft", "prompt"], default=None)
    p.add_argument("--template", choices=["t1", "t2", "t3", "t3b", "soft"], default=None)
    p.add_argument("--soft-len", type=int, default=None)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", default=None)
    p.add_argument("--test", required=True)
    p.add_argument("--format", default="canonical", choices=["canonical", "fewnerd", "ontonotes", "bbn"])
    p.add_argument("--schema", default=None)
    p.add_argument("--verbalizer", default=None)
    p.add_argument("--related-words", default=None)
    p.add_argument("--expansion-k", type=int, default=0)
    p.add_argument("--backend-rules", default=None)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="TOML config; flags override it")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--eval-every-steps", type=int, default=None)
    p.add_argument("--lambda-learnable", action="store_true", default=False)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("pretrain-selfsup", help="zero-shot contrastive pretraining")
    p.add_argument("--pairs", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument(
        "--extra-vocab", action="append", default=None,
        help="JSONL file(s) whose tokens join the encoder vocabulary",
    )
    p.add_argument("--verbalizer", default=None)
    p.add_argument("--related-words", default=None)
    p.add_argument("--expansion-k", type=int, default=0)
    p.add_argument("--backend-rules", default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(fn=_cmd_pretrain_selfsup)

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--format", default="canonical", choices=["canonical", "fewnerd", "ontonotes", "bbn"])
    p.add_argument("--exclude-gold-type", action="append", default=None)
    p.add_argument("--macro-per-example", action="store_true")
    p.add_argument("--manifest", default=None)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("predict", help="write per-example predictions as JSONL")
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="canonical", choices=["canonical", "fewnerd", "ontonotes", "bbn"])
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--verbalizer", default=None)
    p.add_argument("--related-words", default=None)
    p.add_argument("--expansion-k", type=int, default=0)
    p.add_argument("--backend-rules", default=None)
    p.add_argument("--template", choices=["t1", "t2", "t3", "t3b", "soft"], default="t3")
    p.add_argument("--soft-len", type=int, default=2)
    p.add_argument("--mode", choices=["prompt", "ft"], default="prompt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("report-types", help="per-type prediction distribution CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--format", default="canonical", choices=["canonical", "fewnerd", "ontonotes", "bbn"])
    p.add_argument("--exclude-gold-type", action="append", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(fn=_cmd_report_types)

    return parser


_DATA_ERRORS = (
    DataError,
    SchemaError,
    RenderError,
    EncodeError,
    DegenerateScoreError,
    TrainingError,
    PairGenerationError,
)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as e:
        logger.error("configuration error: %s", e)
        return 2
    except _DATA_ERRORS as e:
        logger.error("data error: %s", e)
        return 3
    except CapabilityError as e:
        logger.error("capability error: %s", e)
        return 4
    except FileNotFoundError as e:
        logger.error("missing file: %s", e)
        return 3
    except PromptTypingError as e:
        logger.error("error: %s", e)
        return 3


if __name__ == "__main__":
    sys.exit(main())
