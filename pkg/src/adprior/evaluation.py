"""Recall@K, ranking-feature emission, AUC/PR-AUC, logistic probe and ablations."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .compiler import UserContext
from .domain import AdvertiserRecord, Label, Prediction, UserProfile
from .errors import EmptyEvalSetError, SingleClassError, UnknownGroupError
from .parsing import normalize_name, parse_answer
from .prompting import BEHAVIOR_FIELDS, PromptStage, render_prompt
from .reward import match_position

DEFAULT_KS = (1, 5, 20)


def recall_at_k(examples: Sequence[tuple[Prediction, Label]], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not examples:
        raise EmptyEvalSetError("recall over an empty eval set")
    hits = 0
    for prediction, label in examples:
        pos = match_position(prediction, label.advertiser_name)
        if pos is not None and pos <= k:
            hits += 1
    return hits / len(examples)


def recall_table(examples, ks: Iterable[int] = DEFAULT_KS) -> dict[str, float]:
    return {f"recall@{k}": recall_at_k(examples, k) for k in ks}


def metrics_report(rows: Mapping[str, Mapping[str, float]], ks: Sequence[int] = DEFAULT_KS,
                   **meta) -> dict:
    """Method-by-Recall@K table: one row per method, one column per K."""
    columns = [f"Recall@{k}" for k in ks]
    out_rows = []
    for method, table in rows.items():
        row = {"method": method}
        row.update({c: table[f"recall@{k}"] for c, k in zip(columns, ks)})
        out_rows.append(row)
    return {"columns": columns, "rows": out_rows, **meta}


def write_metrics(report: Mapping, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class RankingFeatures:
    in_top20: float
    in_top5: float
    reciprocal_rank: float
    interest_overlap: float
    past_conversion: float

    def as_vector(self) -> np.ndarray:
        return np.array(list(asdict(self).values()), dtype=np.float64)


def emit_ranking_features(prediction: Prediction, advertiser_name: str,
                          context: UserContext) -> RankingFeatures:
    pos = match_position(prediction, advertiser_name)
    interests = {normalize_name(x) for x in prediction.interests} if prediction.ok else set()
    categories = {normalize_name(x) for x in context.top_categories}
    past = {normalize_name(x) for x in context.past_conversion_advertisers}
    return RankingFeatures(
        in_top20=float(pos is not None and pos <= 20),
        in_top5=float(pos is not None and pos <= 5),
        reciprocal_rank=0.0 if pos is None else 1.0 / pos,
        interest_overlap=float(len(interests & categories)),
        past_conversion=float(normalize_name(advertiser_name) in past),
    )


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d sequences")
    return s, y


def auc(scores, binary_labels) -> float:
    """Probability a random positive outscores a random negative; ties count half."""
    s, y = _binary(scores, binary_labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("auc needs both classes")
    ranks = _average_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, binary_labels) -> float:
    """Average precision over a descending-score ranking; ties keep input order."""
    s, y = _binary(scores, binary_labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise SingleClassError("pr_auc needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    ranks = np.flatnonzero(hits) + 1
    precisions = np.arange(1, n_pos + 1) / ranks
    return float(precisions.sum() / n_pos)


def _standardize(x: np.ndarray, mean=None, std=None):
    if mean is None:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std[std == 0] = 1.0
    return (x - mean) / std, mean, std


def fit_logistic(x: np.ndarray, y: np.ndarray, epochs: int = 300, lr: float = 0.5,
                 l2: float = 1e-4) -> np.ndarray:
    """Full-batch gradient descent; returns weights with the bias last."""
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    w = np.zeros(xb.shape[1])
    n = len(y)
    for _ in range(epochs):
        z = xb @ w
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        grad = xb.T @ (p - y) / n + l2 * np.r_[w[:-1], 0.0]
        w -= lr * grad
    return w


@dataclass(frozen=True)
class ProbeReport:
    weights_with: tuple[float, ...]
    weights_without: tuple[float, ...]
    auc_with: float
    auc_without: float
    pr_auc_with: float
    pr_auc_without: float

    @property
    def delta_auc(self) -> float:
        return self.auc_with - self.auc_without

    @property
    def delta_pr_auc(self) -> float:
        return self.pr_auc_with - self.pr_auc_without

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(delta_auc=self.delta_auc, delta_pr_auc=self.delta_pr_auc)
        return out


def train_logistic_probe(base_features, llm_features, labels, *, epochs: int = 300,
                         lr: float = 0.5, seed: int = 0, test_fraction: float = 0.3
                         ) -> ProbeReport:
    """Held-out AUC/PR-AUC of a logistic scorer with and without the LLM columns."""
    xb = np.asarray(base_features, dtype=np.float64)
    xl = np.asarray(llm_features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if xb.ndim == 1:
        xb = xb[:, None]
    if xl.ndim == 1:
        xl = xl[:, None]
    if len(np.unique(y)) < 2:
        raise SingleClassError("probe needs both classes")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    n_test = max(1, int(round(test_fraction * len(y))))
    test, train = perm[:n_test], perm[n_test:]
    if len(np.unique(y[train])) < 2 or len(np.unique(y[test])) < 2:
        raise SingleClassError("train or test split lacks a class")

    def run(x):
        xtr, mean, std = _standardize(x[train])
        xte, _, _ = _standardize(x[test], mean, std)
        w = fit_logistic(xtr, y[train], epochs, lr)
        s = np.hstack([xte, np.ones((len(test), 1))]) @ w
        return w, auc(s, y[test]), pr_auc(s, y[test])

    w0, auc0, ap0 = run(xb)
    w1, auc1, ap1 = run(np.hstack([xb, xl]))
    return ProbeReport(tuple(w1), tuple(w0), auc1, auc0, ap1, ap0)


def build_probe_dataset(
    contexts: Mapping[str, UserContext],
    predictions: Mapping[str, Prediction],
    labels: Mapping[str, Label],
    catalog: Mapping[str, AdvertiserRecord],
    *,
    negatives_per_user: int = 9,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(base, llm, y) rows for each user's label advertiser plus sampled negatives.

    Base columns stand in for a ranker with no per-user history: log daily
    revenue and preset-pool membership. The LLM columns are the emitted
    ranking features.
    """
    rng = np.random.default_rng(seed)
    active = sorted(a for a, rec in catalog.items() if rec.is_active)
    base, llm, y = [], [], []
    for user_id in sorted(labels):
        if user_id not in contexts or user_id not in predictions:
            continue
        label = labels[user_id]
        ctx = contexts[user_id]
        pool = {normalize_name(x) for x in ctx.preset_pool}
        others = [a for a in active if a != label.advertiser_id]
        take = min(negatives_per_user, len(others))
        picks = [others[i] for i in rng.choice(len(others), size=take, replace=False)]
        for adv_id, target in [(label.advertiser_id, 1.0)] + [(a, 0.0) for a in picks]:
            rec = catalog[adv_id]
            base.append([np.log1p(rec.daily_revenue), float(normalize_name(rec.name) in pool)])
            llm.append(emit_ranking_features(predictions[user_id], rec.name, ctx).as_vector())
            y.append(target)
    if not y:
        raise EmptyEvalSetError("no labelled users with predictions")
    return np.asarray(base), np.asarray(llm), np.asarray(y)


ABLATION_GROUPS = (
    "past_conversion_advertisers", "offsite_urls", "offsite_searches", "matched_conversions",
    "onsite_searches", "top_brands", "user_profile", "attributed_conversions",
    "top_categories",
)
GROUP_LABELS = {
    "past_conversion_advertisers": "Remove active advertisers with past conversions",
    "offsite_urls": "Remove offsite URLs",
    "offsite_searches": "Remove offsite searches",
    "matched_conversions": "Remove matched conversions",
    "onsite_searches": "Remove onsite searches",
    "top_brands": "Remove top brands",
    "user_profile": "Remove user profile",
    "attributed_conversions": "Remove attributed conversions",
    "top_categories": "Remove top categories",
}
SEQUENCE_MODES = ("reorder", "reorder_delete", "delete")
MODE_LABELS = {
    "reorder": "Reorder by performance descending",
    "reorder_delete": "Reorder + delete negative-performing sequence",
    "delete": "Delete negative-performing sequence",
}


def remove_group(context: UserContext, group: str) -> UserContext:
    if group == "user_profile":
        return context.with_fields(profile=UserProfile(context.user_id, user_state=""))
    if group not in ABLATION_GROUPS:
        raise UnknownGroupError(group)
    return context.with_fields(**{group: ()})


@dataclass(frozen=True)
class AblationRow:
    name: str
    recall: float
    delta: float


def _evaluate(contexts, labels, predictor, k, stage, behavior_order=None, drop=()):
    examples = []
    for user_id in sorted(labels):
        ctx = contexts[user_id]
        for group in drop:
            ctx = remove_group(ctx, group)
        prompt = render_prompt(ctx, stage, behavior_order=behavior_order)
        examples.append((parse_answer(predictor.predict(prompt, ctx)), labels[user_id]))
    return recall_at_k(examples, k)


def ablate(
    contexts: Mapping[str, UserContext],
    labels: Mapping[str, Label],
    predictor,
    groups: Sequence[str] = ABLATION_GROUPS,
    k: int = 5,
    modes: Sequence[str] = (),
    stage: PromptStage | str = PromptStage.INFERENCE,
) -> list[AblationRow]:
    """Recall@k deltas for removing each feature group, plus sequence-order modes.

    The order modes rank behavior sequences by their single-removal |delta|
    (largest first); "negative-performing" sequences are those whose removal
    raised recall.
    """
    for g in groups:
        if g not in ABLATION_GROUPS:
            raise UnknownGroupError(g)
    for m in modes:
        if m not in SEQUENCE_MODES:
            raise UnknownGroupError(m)
    baseline = _evaluate(contexts, labels, predictor, k, stage)
    rows = [AblationRow("Baseline", baseline, 0.0)]
    single: dict[str, float] = {}
    wanted = list(groups)
    if modes:
        wanted += [f for f in BEHAVIOR_FIELDS if f not in wanted]
    for g in wanted:
        r = _evaluate(contexts, labels, predictor, k, stage, drop=(g,))
        single[g] = r - baseline
        if g in groups:
            rows.append(AblationRow(GROUP_LABELS[g], r, r - baseline))
    if modes:
        order = sorted(BEHAVIOR_FIELDS, key=lambda f: (-abs(single[f]), BEHAVIOR_FIELDS.index(f)))
        negative = tuple(f for f in BEHAVIOR_FIELDS if single[f] > 0)
        for m in modes:
            r = _evaluate(contexts, labels, predictor, k, stage,
                          behavior_order=order if m.startswith("reorder") else None,
                          drop=negative if m.endswith("delete") else ())
            rows.append(AblationRow(MODE_LABELS[m], r, r - baseline))
    return rows


def write_ablation_tsv(rows: Sequence[AblationRow], k: int, path: str | Path) -> None:
    lines = [f"Ablation\tDelta Recall@{k}"]
    lines += [f"{row.name}\t{row.delta:+.4f}" for row in rows if row.name != "Baseline"]
    Path(path).write_text("\n".join(lines) + "\n")
