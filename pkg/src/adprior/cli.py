"""Command-line entry point: one subcommand per pipeline stage, files in, files out.

Exit codes: 0 ok, 1 usage, 2 data error, 3 remote predictor failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .cohort import CohortConfig, CohortExample, build_cohort
from .compiler import CompileConfig, UserContext, build_preset_pool, compile_context
from .domain import Label, Prediction, validate_event
from .errors import AdpriorError, PredictorError
from .evaluation import (
    ABLATION_GROUPS,
    SEQUENCE_MODES,
    ablate,
    build_probe_dataset,
    metrics_report,
    recall_table,
    train_logistic_probe,
    write_ablation_tsv,
    write_metrics,
)
from .ingestion import (
    build_snapshot,
    future_events,
    load_snapshot,
    parse_date,
    read_catalog,
    read_events,
    read_jsonl,
    read_profiles,
    save_snapshot,
    write_events,
    write_jsonl,
)
from .orchestrator import (
    SimulatedCrash,
    collect_outputs,
    incremental_user_set,
    merge_incremental,
    plan_run,
    run_epochs,
)
from .parsing import parse_answer
from .predictor import KINDS, PredictorSpec, make_predictor
from .prompting import DEFAULT_BUDGET_TOKENS, PromptStage, RenderedPrompt, render_prompt
from .retrieval import (
    LLM_CHANNEL,
    AdItem,
    BlendConfig,
    Objective,
    TwoTowerModel,
    blend,
    diversity,
    item_matrix,
    rank_channel,
    target_filter,
    train_two_tower,
    user_feature_tokens,
)
from .reward import total_reward
from .sid import SidCodebook, encode_batch, format_sid, Sid, train_codebook
from .synthgen import generate_world

log = logging.getLogger("adprior")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_REMOTE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report("usage", message)
        raise SystemExit(EXIT_USAGE)


def _report(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def _need(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required {flags}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _truthy(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {value!r}")


def load_config(path: str | Path, parser: argparse.ArgumentParser) -> dict[str, Any]:
    """Parse ``key = value`` lines into defaults for ``parser``.

    Keys are flag names with or without leading dashes; ``#`` starts a
    comment. Values are converted with the flag's own type.
    """
    actions = {a.dest: a for a in parser._actions}
    out: dict[str, Any] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        dest = key.lstrip("-").replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            out[dest] = _truthy(value)
        elif action.type is not None:
            try:
                out[dest] = action.type(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from None
        else:
            out[dest] = value
        if action.choices is not None and out[dest] not in action.choices:
            raise UsageError(f"{path}:{lineno}: {key} must be one of {sorted(action.choices)}")
    return out


# file helpers

def _read_contexts(path) -> dict[str, UserContext]:
    return {c.user_id: c for c in read_jsonl(path, UserContext.from_dict)}


def _read_cohort(path) -> list[CohortExample]:
    return read_jsonl(path, CohortExample.from_dict)


def _read_predictions(path) -> dict[str, Prediction]:
    return {rec["user_id"]: Prediction.from_dict(rec) for rec in read_jsonl(path, dict)}


def _labels(cohort: Sequence[CohortExample], split: str) -> dict[str, Label]:
    return {ex.user_id: ex.label for ex in cohort if split == "all" or ex.split == split}


def _read_items(path) -> list[AdItem]:
    return read_jsonl(path, AdItem.from_dict)


def _read_embeddings(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if path.suffix == ".npy":
        x = np.load(path)
        return [str(i) for i in range(len(x))], x
    rows = read_jsonl(path, dict)
    ids = [str(r["item_id"]) for r in rows]
    return ids, np.asarray([r["embedding"] for r in rows], dtype=np.float64)


def _dump_json(obj: Any, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _spec(args) -> PredictorSpec:
    return PredictorSpec(
        kind=args.predictor, endpoint_url=args.endpoint, model_name=args.model,
        timeout_ms=args.timeout_ms, max_retries=args.max_retries,
        temperature=args.temperature, seed=args.predictor_seed,
        max_in_flight=args.max_in_flight, auth_env=args.auth_env,
    )


# subcommands

def cmd_synth(args) -> int:
    _need(args, "out")
    world = generate_world(args.users, args.advertisers, args.items, args.days, args.seed,
                           args.affinity, anchor_date=parse_date(args.anchor_date))
    world.save(args.out)
    log.info("wrote %d events for %d users to %s", len(world.events), args.users, args.out)
    return EXIT_OK


def cmd_ingest(args) -> int:
    _need(args, "input", "out")
    src = Path(args.input)
    anchor = args.anchor_date
    if anchor is None and (src / "world.json").exists():
        anchor = json.loads((src / "world.json").read_text())["anchor_date"]
    if anchor is None:
        raise UsageError("ingest: --anchor-date is required when the input has no world.json")
    events = read_events(src / "events.jsonl")
    bad = [(i, p) for i, e in enumerate(events) for p in validate_event(e)]
    if bad and not args.drop_invalid:
        shown = "; ".join(f"event {i}: {p}" for i, p in bad[:5])
        raise AdpriorError(f"{len(bad)} invalid events ({shown})")
    if bad:
        dropped = {i for i, _ in bad}
        log.warning("dropping %d invalid events", len(dropped))
        events = [e for i, e in enumerate(events) if i not in dropped]
    snapshot = build_snapshot(events, read_catalog(src / "catalog.jsonl"),
                              read_profiles(src / "profiles.jsonl"), anchor)
    save_snapshot(snapshot, args.out)
    write_events(future_events(events, anchor), Path(args.out) / "future_events.jsonl")
    return EXIT_OK


def _cohort_config(args) -> CohortConfig:
    overrides = {}
    for flag, key in (("min_sequence_length", "min_sequence_length"),
                      ("lookback_days", "conversion_lookback_days"),
                      ("label_window_days", "label_window_days"),
                      ("train_fraction", "split_fraction_train"),
                      ("split_seed", "split_seed"),
                      ("market", "market_filter")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.require_opt_in:
        overrides["require_optin"] = True
    if args.market == "":
        overrides["market_filter"] = None
    return CohortConfig.v0(**overrides) if args.v0 else CohortConfig.v1(**overrides)


def cmd_cohort(args) -> int:
    _need(args, "snapshot", "out")
    if args.v0 and args.v1:
        raise UsageError("cohort: --v0 and --v1 are exclusive")
    snapshot = load_snapshot(args.snapshot)
    future_path = args.future or Path(args.snapshot) / "future_events.jsonl"
    cohort = build_cohort(snapshot, read_events(future_path), _cohort_config(args))
    write_jsonl((ex.to_dict() for ex in cohort), args.out)
    log.info("cohort of %d users", len(cohort))
    return EXIT_OK


def cmd_compile(args) -> int:
    _need(args, "snapshot", "out")
    snapshot = load_snapshot(args.snapshot)
    if args.cohort:
        users = [ex.user_id for ex in _read_cohort(args.cohort)
                 if args.split == "all" or ex.split == args.split]
    else:
        users = snapshot.user_ids
    config = CompileConfig(include_sids=bool(args.item_sids),
                           preset_pool_size=args.preset_pool_size)
    item_sids = None
    if args.item_sids:
        item_sids = {r["item_id"]: r["sid"] for r in read_jsonl(args.item_sids, dict)}
    pool = build_preset_pool(snapshot.catalog.values(), config.preset_pool_size)
    write_jsonl((compile_context(snapshot, u, config, preset_pool=pool,
                                 item_sids=item_sids).to_dict() for u in users), args.out)
    return EXIT_OK


def cmd_prompt(args) -> int:
    _need(args, "contexts", "out")
    stage = PromptStage(args.stage)
    contexts = _read_contexts(args.contexts)
    write_jsonl((render_prompt(contexts[u], stage, budget_tokens=args.budget_tokens).to_dict()
                 for u in sorted(contexts)), args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    _need(args, "prompts", "contexts", "out")
    predictor = make_predictor(_spec(args))
    contexts = _read_contexts(args.contexts)
    prompts = read_jsonl(args.prompts, RenderedPrompt.from_dict)
    for p in prompts:
        if p.user_id not in contexts:
            raise AdpriorError(f"no context for prompt user {p.user_id!r}")

    def one(p: RenderedPrompt) -> dict:
        return {"user_id": p.user_id, "raw": predictor.predict(p, contexts[p.user_id])}

    workers = args.max_in_flight if args.predictor == "remote" else 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(one, prompts))
    write_jsonl(rows, args.out)
    return EXIT_OK


def cmd_parse(args) -> int:
    _need(args, "raw", "out")
    rows = read_jsonl(args.raw, dict)
    out = [parse_answer(r["raw"]).to_dict(r["user_id"]) for r in rows]
    write_jsonl(out, args.out)
    bad = sum(1 for r in out if r["parse_status"] != "ok")
    if bad:
        log.warning("%d of %d answers malformed", bad, len(out))
    return EXIT_OK


def cmd_reward(args) -> int:
    _need(args, "predictions", "cohort", "out")
    predictions = _read_predictions(args.predictions)
    labels = _labels(_read_cohort(args.cohort), args.split)
    rows = [total_reward(predictions[u], labels[u].advertiser_name).to_dict(u)
            for u in sorted(labels) if u in predictions]
    write_jsonl(rows, args.out)
    mean = sum(r["r_total"] for r in rows) / len(rows) if rows else 0.0
    sys.stdout.write(json.dumps({"users": len(rows), "mean_r_total": mean}) + "\n")
    return EXIT_OK


def cmd_recall(args) -> int:
    _need(args, "predictions", "cohort", "out")
    predictions = _read_predictions(args.predictions)
    labels = _labels(_read_cohort(args.cohort), args.split)
    missing = sorted(set(labels) - set(predictions))
    if missing:
        # a user without an answer counts as a miss
        log.warning("%d labelled users have no prediction", len(missing))
    empty = Prediction((), (), "malformed")
    examples = [(predictions.get(u, empty), labels[u]) for u in sorted(labels)]
    table = recall_table(examples, args.k)
    rows = {}
    if args.append and Path(args.out).exists():
        prior = json.loads(Path(args.out).read_text())
        for row in prior["rows"]:
            rows[row["method"]] = {f"recall@{k}": row[f"Recall@{k}"] for k in args.k}
    rows[args.method] = table
    report = metrics_report(rows, args.k, split=args.split, n_users=len(examples))
    write_metrics(report, args.out)
    sys.stdout.write(json.dumps({args.method: table}, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_ablate(args) -> int:
    _need(args, "contexts", "cohort", "out")
    contexts = _read_contexts(args.contexts)
    labels = {u: lab for u, lab in _labels(_read_cohort(args.cohort), args.split).items()
              if u in contexts}
    predictor = make_predictor(_spec(args))
    rows = ablate(contexts, labels, predictor, args.groups, k=args.ablate_k,
                  modes=args.modes, stage=PromptStage(args.stage))
    write_ablation_tsv(rows, args.ablate_k, args.out)
    return EXIT_OK


def cmd_sid_train(args) -> int:
    _need(args, "embeddings", "out")
    _, x = _read_embeddings(args.embeddings)
    codebook = train_codebook(x, args.levels, args.codes, args.seed, args.max_iters)
    codebook.save(args.out)
    return EXIT_OK


def cmd_sid_encode(args) -> int:
    _need(args, "codebook", "embeddings", "out")
    codebook = SidCodebook.load(args.codebook)
    ids, x = _read_embeddings(args.embeddings)
    codes, _ = encode_batch(codebook, x)
    write_jsonl(({"item_id": i, "codes": [int(c) for c in row],
                  "sid": format_sid(Sid(tuple(int(c) for c in row)))}
                 for i, row in zip(ids, codes)), args.out)
    return EXIT_OK


def _user_tokens(snapshot) -> dict[str, list[str]]:
    return {u: user_feature_tokens(snapshot.user_events(u)) for u in snapshot.user_ids}


def cmd_cg_train(args) -> int:
    _need(args, "snapshot", "items", "out")
    snapshot = load_snapshot(args.snapshot)
    model = TwoTowerModel.initialize(args.dim, args.buckets, args.seed)
    train_two_tower(model, snapshot.events, _read_items(args.items), Objective(args.objective),
                    _user_tokens(snapshot), epochs=args.epochs, lr=args.lr,
                    negatives_per_positive=args.negatives, seed=args.seed)
    model.save(args.out)
    sys.stdout.write(json.dumps({"loss_history": model.history}) + "\n")
    return EXIT_OK


def cmd_cg_blend(args) -> int:
    _need(args, "model", "snapshot", "items", "predictions", "out")
    model = TwoTowerModel.load(args.model)
    snapshot = load_snapshot(args.snapshot)
    items = _read_items(args.items)
    vectors = item_matrix(model, items)
    index = {it.item_id: k for k, it in enumerate(items)}
    predictions = _read_predictions(args.predictions)
    config = BlendConfig(args.l0_quota, args.dedup)
    rows = []
    for user_id in sorted(predictions):
        tokens = user_feature_tokens(snapshot.user_events(user_id)) \
            if snapshot.has_user(user_id) else []
        targeted = target_filter(predictions[user_id], snapshot.catalog, items)
        llm = rank_channel(model, tokens, targeted,
                           vectors[[index[it.item_id] for it in targeted]] if targeted else None)
        general = rank_channel(model, tokens, items, vectors, limit=args.slate_size)
        slate = blend([(LLM_CHANNEL, llm), ("two_tower", general)], config)[: args.slate_size]
        rows.append({"user_id": user_id,
                     "items": [it.item_id for it in slate],
                     "advertisers": [it.advertiser_id for it in slate]})
    write_jsonl(rows, args.out)
    return EXIT_OK


def cmd_cg_diversity(args) -> int:
    _need(args, "slates")
    rows = read_jsonl(args.slates, dict)
    scores = [diversity([AdItem(i, a) for i, a in zip(r["items"], r["advertisers"])], args.k)
              for r in rows]
    mean = sum(scores) / len(scores) if scores else 1.0
    _dump_json({"k": args.k, "users": len(scores), f"diversity@{args.k}": mean}, args.out)
    return EXIT_OK


def cmd_probe(args) -> int:
    _need(args, "contexts", "predictions", "cohort", "snapshot")
    contexts = _read_contexts(args.contexts)
    predictions = _read_predictions(args.predictions)
    labels = _labels(_read_cohort(args.cohort), args.split)
    catalog = load_snapshot(args.snapshot).catalog
    reports = []
    for seed in range(args.seeds):
        base, llm, y = build_probe_dataset(contexts, predictions, labels, catalog,
                                           negatives_per_user=args.negatives, seed=seed)
        reports.append(train_logistic_probe(base, llm, y, seed=seed).to_dict())
    d_auc = [r["delta_auc"] for r in reports]
    d_ap = [r["delta_pr_auc"] for r in reports]
    _dump_json({"seeds": args.seeds, "mean_delta_auc": float(np.mean(d_auc)),
                "mean_delta_pr_auc": float(np.mean(d_ap)), "runs": reports}, args.out)
    return EXIT_OK


def _injector(spec: str | None):
    if not spec:
        return None
    try:
        point, epoch = spec.rsplit(":", 1)
        epoch = int(epoch)
    except ValueError:
        raise UsageError(f"--inject-failure expects point:epoch, got {spec!r}") from None
    if point not in ("before_epoch", "mid_epoch", "after_commit"):
        raise UsageError(f"unknown failure point {point!r}")

    def inject(at: str, index: int) -> None:
        if at == point and index == epoch:
            raise SimulatedCrash(f"injected failure at {point} of epoch {epoch}")
    return inject


def cmd_run(args) -> int:
    _need(args, "contexts", "run_dir")
    contexts = _read_contexts(args.contexts)
    run_dir = Path(args.run_dir)
    if (run_dir / "checkpoint.json").exists() and not args.resume:
        raise UsageError(f"{run_dir} already holds a checkpoint; pass --resume to continue it")
    events = []
    watermark = None
    if args.snapshot:
        snapshot = load_snapshot(args.snapshot)
        events = snapshot.events
        # data time, not wall time, so incremental runs replay deterministically
        watermark = max((e.timestamp for e in events), default=None)
    users = sorted(contexts)
    if args.incremental:
        _need(args, "since", "snapshot")
        prior = json.loads((Path(args.since) / "checkpoint.json").read_text())
        extra = _names(Path(args.widen_users).read_text().replace("\n", ",")) \
            if args.widen_users else ()
        users = incremental_user_set(users, events, prior.get("last_success_timestamp"), extra)
    stage = PromptStage(args.stage)

    def source(user_id: str):
        ctx = contexts[user_id]
        return render_prompt(ctx, stage, budget_tokens=args.budget_tokens), ctx

    plan = plan_run(users, args.epoch_size, args.run_id, args.plan_seed)
    summary = run_epochs(plan, run_dir, make_predictor(_spec(args)), source,
                         concurrency=args.concurrency,
                         failure_injector=_injector(args.inject_failure),
                         watermark=watermark)
    if args.incremental:
        merged = merge_incremental(collect_outputs(args.since), collect_outputs(run_dir))
        write_jsonl(merged.values(), run_dir / "merged.jsonl")
    out = {
        "run_id": summary.run_id, "epochs_total": summary.epochs_total,
        "epochs_run": summary.epochs_run, "epochs_skipped": summary.epochs_skipped,
        "predictor_calls": summary.predictor_calls, "dead_letters": summary.dead_letters,
        "scheduled_users": len(users),
        "cache": None if summary.cache is None else vars(summary.cache),
    }
    sys.stdout.write(json.dumps(out, sort_keys=True) + "\n")
    return EXIT_OK


# parser

def _predictor_flags(p: argparse.ArgumentParser, default: str = "mock") -> None:
    p.add_argument("--predictor", choices=KINDS, default=default)
    p.add_argument("--endpoint", help="chat-completions URL for the remote predictor")
    p.add_argument("--model", help="model name for the remote predictor")
    p.add_argument("--auth-env", help="environment variable holding a bearer token")
    p.add_argument("--timeout-ms", type=int, default=30_000)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--max-in-flight", type=int, default=8)
    p.add_argument("--temperature", type=float)
    p.add_argument("--predictor-seed", type=int, default=0)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="adprior", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"adprior {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="file of key = value lines; flags override it")
    common.add_argument("--log-level", default="WARNING")
    subs: dict[str, argparse.ArgumentParser] = {}

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("synth", cmd_synth, "generate a synthetic world")
    p.add_argument("--out")
    p.add_argument("--users", type=int, default=1000)
    p.add_argument("--advertisers", type=int, default=200)
    p.add_argument("--items", type=int, default=2000)
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--affinity", type=float, default=0.9)
    p.add_argument("--anchor-date", default="2025-06-30")

    p = add("ingest", cmd_ingest, "validate events and write an anchor-date snapshot")
    p.add_argument("--input", help="directory with events/catalog/profiles jsonl")
    p.add_argument("--out")
    p.add_argument("--anchor-date")
    p.add_argument("--drop-invalid", action="store_true")

    p = add("cohort", cmd_cohort, "select users, build labels and the train/eval split")
    p.add_argument("--snapshot")
    p.add_argument("--future", help="post-anchor events (default: <snapshot>/future_events.jsonl)")
    p.add_argument("--out")
    p.add_argument("--v0", action="store_true", help="long-history preset")
    p.add_argument("--v1", action="store_true", help="serving-traffic preset (default)")
    p.add_argument("--min-sequence-length", type=int)
    p.add_argument("--lookback-days", type=int)
    p.add_argument("--label-window-days", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--market", help="market filter; empty string disables it")
    p.add_argument("--require-opt-in", action="store_true")

    p = add("compile", cmd_compile, "compile per-user contexts")
    p.add_argument("--snapshot")
    p.add_argument("--cohort")
    p.add_argument("--split", choices=("all", "train", "eval"), default="all")
    p.add_argument("--item-sids", help="jsonl of item_id/sid from sid-encode")
    p.add_argument("--preset-pool-size", type=int, default=50)
    p.add_argument("--out")

    p = add("prompt", cmd_prompt, "render prompts")
    p.add_argument("--contexts")
    p.add_argument("--stage", choices=[s.value for s in PromptStage], default="inference")
    p.add_argument("--budget-tokens", type=int, default=DEFAULT_BUDGET_TOKENS)
    p.add_argument("--out")

    p = add("predict", cmd_predict, "run a predictor over rendered prompts")
    p.add_argument("--prompts")
    p.add_argument("--contexts")
    p.add_argument("--out")
    _predictor_flags(p)

    p = add("parse", cmd_parse, "parse raw answers")
    p.add_argument("--raw")
    p.add_argument("--out")

    for name, func, help_ in (("reward", cmd_reward, "score predictions with the RL reward"),
                              ("recall", cmd_recall, "recall@K report")):
        p = add(name, func, help_)
        p.add_argument("--predictions")
        p.add_argument("--cohort")
        p.add_argument("--split", choices=("all", "train", "eval"), default="eval")
        p.add_argument("--out")
    subs["recall"].add_argument("--k", type=_ints, default=[1, 5, 20])
    subs["recall"].add_argument("--method", default="model")
    subs["recall"].add_argument("--append", action="store_true",
                                help="add a row to an existing report")

    p = add("ablate", cmd_ablate, "feature-group ablation")
    p.add_argument("--contexts")
    p.add_argument("--cohort")
    p.add_argument("--split", choices=("all", "train", "eval"), default="eval")
    p.add_argument("--k", dest="ablate_k", type=int, default=5)
    p.add_argument("--groups", type=_names, default=list(ABLATION_GROUPS))
    p.add_argument("--modes", type=_names, default=[],
                   help="comma list of " + ",".join(SEQUENCE_MODES))
    p.add_argument("--stage", choices=[s.value for s in PromptStage], default="inference")
    p.add_argument("--out")
    _predictor_flags(p, default="baseline")

    p = add("sid-train", cmd_sid_train, "train a residual codebook")
    p.add_argument("--embeddings", help=".npy matrix or jsonl of item_id/embedding")
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--codes", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=25)
    p.add_argument("--out")

    p = add("sid-encode", cmd_sid_encode, "encode embeddings into SIDs")
    p.add_argument("--codebook")
    p.add_argument("--embeddings")
    p.add_argument("--out")

    p = add("cg-train", cmd_cg_train, "train the two-tower model")
    p.add_argument("--snapshot")
    p.add_argument("--items")
    p.add_argument("--objective", choices=[o.value for o in Objective],
                   default=Objective.CONVERSIONS_POSITIVE.value)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--buckets", type=int, default=4096)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--negatives", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = add("cg-blend", cmd_cg_blend, "blend the LLM channel into two-tower slates")
    p.add_argument("--model")
    p.add_argument("--snapshot")
    p.add_argument("--items")
    p.add_argument("--predictions")
    p.add_argument("--l0-quota", type=int, default=10)
    p.add_argument("--dedup", choices=("item", "advertiser"), default="item")
    p.add_argument("--slate-size", type=int, default=50)
    p.add_argument("--out")

    p = add("cg-diversity", cmd_cg_diversity, "advertiser diversity of blended slates")
    p.add_argument("--slates")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--out")

    p = add("probe", cmd_probe, "logistic lift from emitted ranking features")
    p.add_argument("--contexts")
    p.add_argument("--predictions")
    p.add_argument("--cohort")
    p.add_argument("--snapshot")
    p.add_argument("--split", choices=("all", "train", "eval"), default="all")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--negatives", type=int, default=9)
    p.add_argument("--out")

    p = add("run", cmd_run, "checkpointed batch inference")
    p.add_argument("--contexts")
    p.add_argument("--run-dir")
    p.add_argument("--run-id", default="run")
    p.add_argument("--stage", choices=[s.value for s in PromptStage], default="inference")
    p.add_argument("--budget-tokens", type=int, default=DEFAULT_BUDGET_TOKENS)
    p.add_argument("--epoch-size", type=int, default=100)
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--plan-seed", type=int, default=0)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--incremental", action="store_true")
    p.add_argument("--since", help="run directory of the last successful run")
    p.add_argument("--snapshot", help="snapshot whose events drive the incremental filter")
    p.add_argument("--widen-users", help="file of extra user ids to re-infer")
    p.add_argument("--inject-failure", help="test only: point:epoch, e.g. after_commit:3")
    _predictor_flags(p)
    return parser, subs


def main(argv: Sequence[str] | None = None) -> int:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if args.config:
            subs[args.command].set_defaults(**load_config(args.config, subs[args.command]))
            args = parser.parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        _report("usage", str(exc))
        return EXIT_USAGE
    except PredictorError as exc:
        _report(type(exc).__name__, str(exc))
        return EXIT_REMOTE
    except SimulatedCrash as exc:
        _report("SimulatedCrash", str(exc))
        return EXIT_DATA
    except (AdpriorError, OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        _report(type(exc).__name__, str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
