"""Command-line entry point: synth, annotate, attributes, predict, eval."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import re
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import yaml

from . import __version__
from .annotate import annotate_document
from .attributes import (
    BASIC_KEYS,
    SpeakerAttributes,
    attribute_row,
    bucket_cohort,
    cohort_means,
    compute_attributes,
    rows_to_csv,
)
from .attributes import RelativeBucket
from .classify import BackchannelResolutionError, HttpTextClassifier, LexiconMock, finalize
from .core import SPEAKERS, ConfigError, DuplexPersonaError, PipelineConfig, derive_seed
from .dataset import DatasetError, dump_dataset, load_dataset
from .evaluate import EvaluationError, TrendTableError, format_report, label_similarity, load_score_file, load_trend_table, trend_score
from .ingest import TranscriptParseError, parse_transcript, serialize_transcript
from .llm_gateway import AuthError, ChatClient, GatewayError, HttpChatClient, MockChatClient
from .personality import PredictionError, PromptFeatures, build_personality_prompt, predict_personality, select_samples
from .synth import InfeasibleProfile, Profile, generate_conversation

logger = logging.getLogger("duplexpersona")

ENDPOINT_ENV = "DUPLEXPERSONA_ENDPOINT"

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG = 0, 1, 2


class UsageError(DuplexPersonaError):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: list[dict] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    llm_usage: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    tool_version: str = __version__

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True) + "\n"


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins timestamps for reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _file_entry(path: str) -> dict:
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return {"name": os.path.basename(path), "sha256": digest}


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", text)


class Run:
    """Output bookkeeping for one command invocation."""

    def __init__(self, command: str, out_dir: str, cfg: PipelineConfig | None):
        self.out_dir = out_dir
        self.manifest = RunManifest(command, dataclasses.asdict(cfg) if cfg else {}, started_at=_timestamp())
        os.makedirs(out_dir, exist_ok=True)

    def add_inputs(self, paths: Sequence[str]) -> None:
        self.manifest.inputs.extend(_file_entry(p) for p in paths)

    def write(self, relpath: str, text: str) -> None:
        atomic_write(os.path.join(self.out_dir, relpath), text)
        self.manifest.outputs.append(relpath)

    def fail(self, item: str, error: Exception | str) -> None:
        logger.error("%s: %s", item, error)
        self.manifest.failures.append({"item": item, "error": str(error)})

    def finish(self, client: ChatClient | None = None) -> int:
        if client is not None:
            self.manifest.llm_usage = client.usage.as_dict()
        self.manifest.finished_at = _timestamp()
        atomic_write(os.path.join(self.out_dir, "manifest.json"), self.manifest.to_json())
        for w in self.manifest.warnings:
            logger.warning("%s", w)
        return EXIT_FAILURES if self.manifest.failures else EXIT_OK


def load_config(args) -> PipelineConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: top level must be a mapping")
    try:
        cfg = PipelineConfig.from_mapping(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    llm = cfg.llm
    endpoint = getattr(args, "endpoint", None) or os.environ.get(ENDPOINT_ENV) or llm.endpoint
    model = getattr(args, "model", None) or llm.model
    llm = dataclasses.replace(llm, endpoint=endpoint, model=model)
    seed = getattr(args, "seed", None)
    return dataclasses.replace(cfg, llm=llm, rng_seed=cfg.rng_seed if seed is None else seed)


def make_chat_client(cfg: PipelineConfig, mock: bool) -> ChatClient:
    if mock:
        return MockChatClient(seed=derive_seed(cfg.rng_seed, "mock"), journal_path=cfg.llm.journal_path)
    if not cfg.llm.endpoint:
        raise ConfigError(f"no chat endpoint: pass --endpoint, set {ENDPOINT_ENV}, or use --mock")
    return HttpChatClient(cfg.llm)


def make_affect_classifiers(cfg: PipelineConfig, mock: bool):
    if mock:
        return LexiconMock("emotion"), LexiconMock("sentiment")
    missing = [k for k in ("emotion_endpoint", "sentiment_endpoint") if not getattr(cfg.llm, k)]
    if missing:
        raise ConfigError(f"llm.{missing[0]} is not configured; set it in the config file or use --mock")
    return (
        HttpTextClassifier(cfg.llm.emotion_endpoint, "emotion"),
        HttpTextClassifier(cfg.llm.sentiment_endpoint, "sentiment"),
    )


def _pool_map(fn: Callable, items: Sequence, workers: int | None) -> list:
    with ThreadPoolExecutor(max_workers=max(1, workers or os.cpu_count() or 1)) as pool:
        return list(pool.map(fn, items))


# --- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    profile_kwargs = {}
    if args.profile:
        with open(args.profile, encoding="utf-8") as fh:
            profile_kwargs = yaml.safe_load(fh) or {}
    if args.duration is not None:
        profile_kwargs["duration_s"] = args.duration
    try:
        profile = Profile.no_overlaps(**profile_kwargs) if args.no_overlaps else Profile(**profile_kwargs)
        profile.check()
    except TypeError as exc:
        raise ConfigError(f"bad profile: {exc}") from None
    seed = args.seed if args.seed is not None else 0
    run = Run("synth", args.out_dir, None)
    run.manifest.config = {"seed": seed, "count": args.count, "profile": dataclasses.asdict(profile)}

    def one(i: int):
        conv_id = f"synth-{seed}-{i:04d}"
        return generate_conversation(derive_seed(seed, f"synth/{i}"), profile, conv_id)

    for doc, truth in _pool_map(one, range(args.count), args.workers):
        run.write(f"transcripts/{safe_name(doc.conversation_id)}.json", serialize_transcript(doc))
        run.write(f"truth/{safe_name(truth.id)}.jsonl", dump_dataset(truth))
    return run.finish()


def cmd_annotate(args) -> int:
    cfg = load_config(args)
    client = make_chat_client(cfg, args.mock)
    emotion_clf, sentiment_clf = make_affect_classifiers(cfg, args.mock)
    run = Run("annotate", args.out_dir, cfg)
    run.add_inputs(args.inputs)

    def one(path: str):
        warnings: list[str] = []
        try:
            with open(path, "rb") as fh:
                doc = parse_transcript(fh.read())
            conv = annotate_document(doc, cfg)
            conv = dataclasses.replace(conv, source={"transcript": os.path.basename(path)})
            conv = finalize(conv, client, emotion_clf, sentiment_clf, cfg, warnings)
            return path, conv, warnings, None
        except AuthError:
            raise
        except (TranscriptParseError, BackchannelResolutionError, GatewayError, OSError, ValueError) as exc:
            return path, None, warnings, exc

    seen = set()
    for path, conv, warnings, exc in _pool_map(one, args.inputs, args.workers):
        run.manifest.warnings.extend(warnings)
        if exc is not None:
            run.fail(path, exc)
            continue
        name = safe_name(conv.id)
        if name in seen:
            run.fail(path, f"duplicate conversation id {conv.id!r}")
            continue
        seen.add(name)
        run.write(f"{name}.jsonl", dump_dataset(conv))
    return run.finish(client)


def _load_datasets(paths: Sequence[str], run: Run):
    convs = []
    for p in paths:
        try:
            convs.append(load_dataset(p))
        except (DatasetError, OSError) as exc:
            run.fail(p, exc)
    return convs


def cmd_attributes(args) -> int:
    cfg = load_config(args)
    run = Run("attributes", args.out_dir, cfg)
    run.add_inputs(args.inputs)
    cohort: list[SpeakerAttributes] = []
    for conv in _load_datasets(args.inputs, run):
        for spk in SPEAKERS:
            try:
                cohort.append(compute_attributes(conv, spk, run.manifest.warnings))
            except ValueError as exc:
                run.fail(f"{conv.id}/{spk}", exc)
    cohort.sort(key=lambda a: a.key)
    if len(cohort) < 4:
        raise UsageError(f"cohort has {len(cohort)} speaker(s); bucketing needs at least 4")
    buckets = bucket_cohort(cohort, cfg)
    means = cohort_means(cohort)
    run.write("attributes.csv", rows_to_csv([attribute_row(a, b) for a, b in zip(cohort, buckets)]))
    lines = [
        json.dumps(
            {
                "key": a.key,
                "attributes": a.to_dict(),
                "raw": a.raw_values(),
                "buckets": {k: b[k].value for k in BASIC_KEYS},
            },
            sort_keys=True,
        )
        for a, b in zip(cohort, buckets)
    ]
    run.write("attributes.jsonl", "".join(line + "\n" for line in lines))
    run.write("cohort.json", json.dumps({"n_speakers": len(cohort), "means": means}, indent=1, sort_keys=True) + "\n")
    return run.finish()


def _read_attribute_table(path: str) -> dict[str, dict]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out[row["key"]] = row
            except (ValueError, KeyError) as exc:
                raise UsageError(f"{path}:{lineno}: malformed attribute line ({exc})") from None
    return out


def cmd_predict(args) -> int:
    cfg = load_config(args)
    try:
        features = PromptFeatures.parse(args.features)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    client = make_chat_client(cfg, args.mock)
    run = Run("predict", args.out_dir, cfg)
    run.manifest.config["features"] = str(features)
    cohort_path = args.cohort or os.path.join(os.path.dirname(args.attributes), "cohort.json")
    run.add_inputs(list(args.inputs) + [args.attributes, cohort_path])
    table = _read_attribute_table(args.attributes)
    with open(cohort_path, encoding="utf-8") as fh:
        means = json.load(fh)["means"]
    convs = {c.id: c for c in _load_datasets(args.inputs, run)}

    jobs = []
    for key in sorted(table):
        row = table[key]
        conv_id, spk = row["attributes"]["conversation_id"], row["attributes"]["speaker"]
        if conv_id not in convs:
            run.fail(key, "no dataset for this speaker among the inputs")
            continue
        attrs = SpeakerAttributes.from_dict(row["attributes"])
        buckets = {k: RelativeBucket(v) for k, v in row["buckets"].items()}
        samples = select_samples(
            convs[conv_id], spk, cfg.sample_count, cfg.sample_min_dur_s, derive_seed(cfg.rng_seed, f"samples/{key}")
        )
        prompt = build_personality_prompt(attrs, buckets, samples, means, features)
        run.write(f"prompts/{safe_name(conv_id)}_{spk}.txt", prompt)
        jobs.append((key, conv_id, spk, prompt))

    def one(job):
        key, conv_id, spk, prompt = job
        try:
            return key, predict_personality(client, prompt, cfg.personality_query_count, cfg, conv_id, spk), None
        except AuthError:
            raise
        except (PredictionError, GatewayError) as exc:
            return key, None, exc

    lines = []
    for key, pred, exc in _pool_map(one, jobs, args.workers):
        if exc is not None:
            run.fail(key, exc)
        else:
            lines.append(json.dumps(pred.to_dict(), sort_keys=True) + "\n")
    run.write("predictions.jsonl", "".join(lines))
    return run.finish(client)


def cmd_eval(args) -> int:
    if not args.labels and not args.attributes:
        raise UsageError("eval needs --labels and/or --attributes")
    run = Run("eval", args.out_dir, None)
    inputs = [args.predictions] + [p for p in (args.labels, args.attributes, args.trend_table) if p]
    run.add_inputs(inputs)
    predictions = load_score_file(args.predictions)
    trend = similarity = None
    if args.attributes:
        table = load_trend_table(args.trend_table)
        attrs = {k: row["raw"] for k, row in _read_attribute_table(args.attributes).items()}
        missing = sorted(set(predictions) - set(attrs))
        if missing:
            raise EvaluationError(f"speakers without attributes: {missing[:5]}")
        trend = trend_score(predictions, attrs, table)
    if args.labels:
        human = load_score_file(args.labels)
        if set(human) != set(predictions) and not args.allow_partial:
            only_pred = sorted(set(predictions) - set(human))
            only_human = sorted(set(human) - set(predictions))
            raise EvaluationError(
                f"speaker sets differ: {len(only_pred)} only in predictions {only_pred[:3]}, "
                f"{len(only_human)} only in labels {only_human[:3]}"
            )
        similarity = label_similarity(predictions, human)
    report = format_report(trend, similarity)
    sys.stdout.write(report)
    run.write("report.txt", report)
    run.write("metrics.json", json.dumps({"trend": trend, "similarity": similarity}, indent=1, sort_keys=True) + "\n")
    return run.finish()


# --- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duplexpersona", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, llm=False):
        p.add_argument("--out-dir", required=True)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, help="conversation worker pool size (default: CPU count)")
        if llm:
            p.add_argument("--mock", action="store_true", help="offline rule-based chat and lexicon classifiers")
            p.add_argument("--endpoint", help=f"chat endpoint base URL (or {ENDPOINT_ENV})")
            p.add_argument("--model")

    p = sub.add_parser("synth", help="generate synthetic transcripts with ground truth")
    common(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--profile", help="YAML file with generator profile fields")
    p.add_argument("--duration", type=float, help="target conversation length in seconds")
    p.add_argument("--no-overlaps", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("annotate", help="transcripts -> dialog datasets")
    common(p, llm=True)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("attributes", help="dialog datasets -> attribute and bucket tables")
    common(p)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_attributes)

    p = sub.add_parser("predict", help="datasets + attributes -> trait predictions")
    common(p, llm=True)
    p.add_argument("inputs", nargs="+", help="dialog dataset files")
    p.add_argument("--attributes", required=True, help="attributes.jsonl from the attributes command")
    p.add_argument("--cohort", help="cohort.json (default: next to --attributes)")
    p.add_argument("--features", default="samples,basics,emotion,sentiment")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against trends and/or human labels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", help="human label file in the prediction format")
    p.add_argument("--attributes", help="attributes.jsonl for the trend metric")
    p.add_argument("--trend-table", help="CSV overriding the shipped trend table")
    p.add_argument("--allow-partial", action="store_true", help="ignore speakers present on one side only")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, UsageError, InfeasibleProfile, TrendTableError, EvaluationError, AuthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
