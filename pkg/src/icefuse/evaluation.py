"""Dataset-level evaluation: accuracies, reclassification quadrants, sweeps.

Evaluation is per-sample pure computation fanned over fixed-size chunks;
chunk boundaries never depend on the worker count, so results are
bit-identical whether the chunks run serially or on a process pool.

Per-sample records keep the image, caption and fused predictions plus the
rank of the true label under each distribution, which makes Top-K accuracy
at any K and the reclassification quadrant analysis cheap afterthoughts.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bundle import EmbeddingBundle
from .errors import InvalidAxisError, InvalidSpecError
from .fusion import IceConfig, ice_predict
from .prototypes import Reduction, score_rows
from .vecmath import ZERO_NORM_FLOOR

CHUNK_SIZE = 512

METHOD_KINDS = ("image_only", "caption_only", "ice")

ABLATION_AXES = ("xi", "K", "upsilon", "lambda_fixed")

# sentinel accepted for axis=K: anchor over all classes (no Top-K cut)
MAX_K = "max"


@dataclass(frozen=True)
class SampleRecord:
    """Prediction outcome for one sample under one prototype reduction."""

    index: int
    label: int
    image_pred: int
    caption_pred: int
    ice_pred: int
    lambda_used: float
    image_label_rank: int  # position of the label in descending image prob
    caption_label_rank: int
    fallback: bool  # caption centroid degenerated; fused as image-only


@dataclass(frozen=True)
class MethodResult:
    method: str  # e.g. "ice" or "ice:score_mean"
    kind: str
    reduction: str
    correct: int
    total: int
    top1_pct: float
    topk_pct: dict[int, float]


@dataclass(frozen=True)
class QuadrantCounts:
    """How fusion changed outcomes relative to the image-only prediction."""

    fixed: int  # image wrong, fused right
    broken: int  # image right, fused wrong
    kept_right: int
    kept_wrong: int

    @property
    def total(self) -> int:
        return self.fixed + self.broken + self.kept_right + self.kept_wrong


@dataclass(frozen=True)
class EvalReport:
    bundle_label: str
    methods: tuple[MethodResult, ...]
    records: dict[str, tuple[SampleRecord, ...]]  # keyed by reduction name
    quadrants: QuadrantCounts
    fallback_count: int
    config: dict
    warnings: tuple[str, ...]

    def method(self, name: str) -> MethodResult:
        for mr in self.methods:
            if mr.method == name:
                return mr
        raise KeyError(name)


@dataclass(frozen=True)
class AblationGrid:
    axis: str
    values: tuple
    top1: tuple[float, ...]
    top1_fixed: tuple[float, ...] | None  # paired series, axis == "xi" only

    def to_csv(self) -> str:
        lines = ["axis,value,top1,top1_fixed"]
        for i, v in enumerate(self.values):
            fixed = "" if self.top1_fixed is None else repr(self.top1_fixed[i])
            lines.append(f"{self.axis},{v},{repr(self.top1[i])},{fixed}")
        return "\n".join(lines) + "\n"


def _parse_method(token: str, default_reduction: Reduction) -> tuple[str, str, Reduction]:
    """Split 'kind' or 'kind:reduction' into (token, kind, reduction)."""
    kind, _, red = token.partition(":")
    if kind not in METHOD_KINDS:
        raise InvalidSpecError(
            f"unknown method {kind!r}; expected one of {METHOD_KINDS}"
        )
    reduction = Reduction(red) if red else default_reduction
    return token, kind, reduction


def _label_ranks(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Rank of each row's label under (prob desc, index asc) ordering."""
    c, m = probs.shape
    rows = np.arange(c)
    pl = probs[rows, labels][:, None]
    cols = np.arange(m)[None, :]
    return (
        (probs > pl) | ((probs == pl) & (cols < labels[:, None]))
    ).sum(axis=1)


def _eval_chunk(
    bundle: EmbeddingBundle,
    protos,
    cfg: IceConfig,
    upsilon: int,
    start: int,
    stop: int,
) -> dict:
    """Score and fuse samples [start, stop); returns per-sample arrays."""
    labels = bundle.labels[start:stop]
    m = protos.num_classes

    s_img = score_rows(
        bundle.image_embeddings[start:stop].astype(np.float64), protos, cfg.tau
    )

    centroids = (
        bundle.caption_embeddings[start:stop, :upsilon, :]
        .astype(np.float64)
        .mean(axis=1)
    )
    fallback = np.linalg.norm(centroids, axis=1) < ZERO_NORM_FLOOR
    s_cap = np.full_like(s_img, 1.0 / m)
    if np.any(~fallback):
        s_cap[~fallback] = score_rows(centroids[~fallback], protos, cfg.tau)

    image_pred = s_img.argmax(axis=1)
    caption_pred = s_cap.argmax(axis=1)
    rank_i = _label_ranks(s_img, labels)
    rank_c = _label_ranks(s_cap, labels)

    n = stop - start
    ice_pred = np.empty(n, dtype=np.int64)
    lam = np.empty(n, dtype=np.float64)
    image_only_cfg = replace(cfg, lambda_mode="image_only")
    for i in range(n):
        pred = ice_predict(s_img[i], s_cap[i], image_only_cfg if fallback[i] else cfg)
        ice_pred[i] = pred.predicted_class
        lam[i] = pred.lambda_used

    return {
        "image_pred": image_pred,
        "caption_pred": caption_pred,
        "ice_pred": ice_pred,
        "lambda": lam,
        "rank_i": rank_i,
        "rank_c": rank_c,
        "fallback": fallback,
    }


_WORKER_STATE: dict = {}


def _init_worker(bundle, protos, cfg, upsilon):
    _WORKER_STATE["args"] = (bundle, protos, cfg, upsilon)


def _run_worker_chunk(bounds: tuple[int, int]) -> dict:
    bundle, protos, cfg, upsilon = _WORKER_STATE["args"]
    return _eval_chunk(bundle, protos, cfg, upsilon, *bounds)


def _eval_reduction(
    bundle: EmbeddingBundle,
    reduction: Reduction,
    cfg: IceConfig,
    upsilon: int,
    workers: int,
) -> list[SampleRecord]:
    protos = bundle.prototype_set(reduction)
    n = bundle.n_images
    bounds = [(s, min(s + CHUNK_SIZE, n)) for s in range(0, n, CHUNK_SIZE)]

    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker,
            initargs=(bundle, protos, cfg, upsilon),
        ) as pool:
            chunks = list(pool.map(_run_worker_chunk, bounds))
    else:
        chunks = [_eval_chunk(bundle, protos, cfg, upsilon, *b) for b in bounds]

    records = []
    for (start, _), ch in zip(bounds, chunks):
        for j in range(len(ch["image_pred"])):
            records.append(
                SampleRecord(
                    index=start + j,
                    label=int(bundle.labels[start + j]),
                    image_pred=int(ch["image_pred"][j]),
                    caption_pred=int(ch["caption_pred"][j]),
                    ice_pred=int(ch["ice_pred"][j]),
                    lambda_used=float(ch["lambda"][j]),
                    image_label_rank=int(ch["rank_i"][j]),
                    caption_label_rank=int(ch["rank_c"][j]),
                    fallback=bool(ch["fallback"][j]),
                )
            )
    return records


def top_k_accuracy(records, k: int) -> float:
    """Percentage of samples whose label sits in the image Top-K."""
    if k < 1:
        raise InvalidSpecError(f"K must be >= 1, got {k}")
    recs = list(records)
    if not recs:
        raise InvalidSpecError("no records to score")
    hits = sum(1 for r in recs if r.image_label_rank < k)
    return 100.0 * hits / len(recs)


def _caption_top_k_accuracy(records, k: int) -> float:
    recs = list(records)
    hits = sum(1 for r in recs if r.caption_label_rank < k)
    return 100.0 * hits / len(recs)


def evaluate(
    bundle: EmbeddingBundle,
    cfg: IceConfig,
    methods=("image_only", "caption_only", "ice"),
    *,
    upsilon: int | None = None,
    topk_ks=None,
    workers: int = 1,
    bundle_label: str | None = None,
    records_jsonl=None,
) -> EvalReport:
    """Evaluate the requested methods over one bundle.

    ``upsilon`` restricts each sample to its first ``upsilon`` stored
    captions. Method tokens may carry a prototype reduction override, e.g.
    ``"ice:score_mean"``; the bare token uses the bundle's stored
    reduction. Deterministic for a fixed bundle and config regardless of
    ``workers``.
    """
    if upsilon is None:
        upsilon = bundle.n_captions
    if not 1 <= upsilon <= bundle.n_captions:
        raise InvalidSpecError(
            f"upsilon {upsilon} outside [1, {bundle.n_captions}] stored captions"
        )
    warnings = []
    if cfg.k > bundle.n_classes:
        warnings.append(
            f"K={cfg.k} exceeds class count m={bundle.n_classes}; clamped to m"
        )
    if topk_ks is None:
        topk_ks = tuple(sorted({1, min(cfg.k, bundle.n_classes)}))
    else:
        topk_ks = tuple(sorted(set(int(k) for k in topk_ks)))
        if any(k < 1 for k in topk_ks):
            raise InvalidSpecError(f"top-K list must be >= 1, got {topk_ks}")

    parsed = [_parse_method(tok, bundle.reduction) for tok in methods]
    if not parsed:
        raise InvalidSpecError("no methods requested")
    reductions = []
    for _, _, red in parsed:
        if red not in reductions:
            reductions.append(red)
    # quadrant analysis follows the first requested reduction
    records_by_red = {
        red.value: tuple(_eval_reduction(bundle, red, cfg, upsilon, workers))
        for red in reductions
    }

    results = []
    for token, kind, red in parsed:
        recs = records_by_red[red.value]
        n = len(recs)
        if kind == "image_only":
            correct = sum(1 for r in recs if r.image_pred == r.label)
            topk = {k: top_k_accuracy(recs, k) for k in topk_ks}
        elif kind == "caption_only":
            correct = sum(1 for r in recs if r.caption_pred == r.label)
            topk = {k: _caption_top_k_accuracy(recs, k) for k in topk_ks}
        else:
            correct = sum(1 for r in recs if r.ice_pred == r.label)
            topk = {k: top_k_accuracy(recs, k) for k in topk_ks}
        results.append(
            MethodResult(
                method=token,
                kind=kind,
                reduction=red.value,
                correct=correct,
                total=n,
                top1_pct=100.0 * correct / n,
                topk_pct=topk,
            )
        )

    primary = records_by_red[reductions[0].value]
    quadrants = _quadrant_counts(primary)
    fallback_count = sum(1 for r in primary if r.fallback)

    config_echo = {
        "K": cfg.k,
        "xi": cfg.xi,
        "epsilon": cfg.epsilon,
        "lambda_mode": cfg.lambda_mode,
        "lambda_fixed": cfg.lambda_fixed,
        "tau": cfg.tau,
        "upsilon": upsilon,
        "methods": list(methods),
        "topk_ks": list(topk_ks),
        "workers": workers,
    }

    report = EvalReport(
        bundle_label=bundle_label or bundle.manifest.dataset or "bundle",
        methods=tuple(results),
        records=records_by_red,
        quadrants=quadrants,
        fallback_count=fallback_count,
        config=config_echo,
        warnings=tuple(warnings),
    )
    if records_jsonl is not None:
        with open(records_jsonl, "w", encoding="utf-8") as fh:
            for red_name, recs in records_by_red.items():
                for r in recs:
                    doc = dataclasses.asdict(r)
                    doc["reduction"] = red_name
                    fh.write(json.dumps(doc, sort_keys=True) + "\n")
    return report


def _quadrant_counts(records) -> QuadrantCounts:
    fixed = broken = kept_right = kept_wrong = 0
    for r in records:
        img_right = r.image_pred == r.label
        ice_right = r.ice_pred == r.label
        if img_right and ice_right:
            kept_right += 1
        elif img_right:
            broken += 1
        elif ice_right:
            fixed += 1
        else:
            kept_wrong += 1
    return QuadrantCounts(fixed, broken, kept_right, kept_wrong)


def quadrant_report(records, caption_texts=None, max_exemplars: int = 5) -> dict:
    """Quadrant counts plus up to ``max_exemplars`` examples per quadrant."""
    counts = _quadrant_counts(records)
    buckets: dict[str, list] = {
        "fixed": [],
        "broken": [],
        "kept_right": [],
        "kept_wrong": [],
    }
    for r in records:
        img_right = r.image_pred == r.label
        ice_right = r.ice_pred == r.label
        name = (
            "kept_right"
            if img_right and ice_right
            else "broken"
            if img_right
            else "fixed"
            if ice_right
            else "kept_wrong"
        )
        if len(buckets[name]) < max_exemplars:
            entry = {
                "index": r.index,
                "label": r.label,
                "image_pred": r.image_pred,
                "ice_pred": r.ice_pred,
                "lambda": r.lambda_used,
            }
            if caption_texts is not None:
                entry["captions"] = list(caption_texts[r.index])
            buckets[name].append(entry)
    return {"counts": dataclasses.asdict(counts), "exemplars": buckets}


def ablate(
    bundle: EmbeddingBundle,
    base_cfg: IceConfig,
    axis: str,
    values,
    *,
    upsilon: int | None = None,
    workers: int = 1,
) -> AblationGrid:
    """Re-evaluate the fused method along one hyperparameter axis.

    ``axis="xi"`` produces paired series: adaptive weighting with the
    ceiling set to each value, and fixed weighting with the constant set to
    the same value. ``axis="K"`` accepts the sentinel ``"max"`` for
    anchoring over all classes. ``axis="upsilon"`` uses the first ``v``
    stored captions per image; for every other axis the optional
    ``upsilon`` argument is held fixed across the sweep.
    """
    if axis not in ABLATION_AXES:
        raise InvalidAxisError(f"axis {axis!r} not one of {ABLATION_AXES}")
    values = tuple(values)
    if not values:
        raise InvalidSpecError("ablation needs at least one value")

    def ice_top1(cfg: IceConfig, upsilon=upsilon) -> float:
        rep = evaluate(
            bundle, cfg, methods=("ice",), upsilon=upsilon, workers=workers
        )
        return rep.method("ice").top1_pct

    top1 = []
    top1_fixed = None
    if axis == "xi":
        top1_fixed = []
        for v in values:
            v = float(v)
            top1.append(ice_top1(replace(base_cfg, lambda_mode="adaptive", xi=v)))
            top1_fixed.append(
                ice_top1(replace(base_cfg, lambda_mode="fixed", lambda_fixed=v))
            )
        top1_fixed = tuple(top1_fixed)
    elif axis == "K":
        for v in values:
            k = bundle.n_classes if v == MAX_K else int(v)
            top1.append(ice_top1(replace(base_cfg, k=k)))
    elif axis == "upsilon":
        for v in values:
            v = int(v)
            if not 1 <= v <= bundle.n_captions:
                raise InvalidSpecError(
                    f"upsilon {v} outside [1, {bundle.n_captions}] stored captions"
                )
            top1.append(ice_top1(base_cfg, upsilon=v))
    else:  # lambda_fixed
        for v in values:
            top1.append(
                ice_top1(
                    replace(base_cfg, lambda_mode="fixed", lambda_fixed=float(v))
                )
            )

    return AblationGrid(
        axis=axis, values=values, top1=tuple(top1), top1_fixed=top1_fixed
    )
