"""Brute-force reference implementation used to check the engine.

Everything here is deliberately plain Python: explicit loops, math.* and
statistics.* only. It recomputes the whole scoring-and-fusion pipeline from
raw embeddings so the engine's vectorized path is checked against an
independent formulation, not against itself.
"""

import math
import statistics


def oracle_cosine(u, w):
    dot = sum(a * b for a, b in zip(u, w))
    nu = math.sqrt(sum(a * a for a in u))
    nw = math.sqrt(sum(b * b for b in w))
    return dot / (nu * nw)


def oracle_softmax(scores, tau=1.0):
    scaled = [tau * s for s in scores]
    mx = max(scaled)
    exps = [math.exp(s - mx) for s in scaled]
    total = sum(exps)
    return [e / total for e in exps]


def oracle_centroid(vectors):
    n = len(vectors)
    dim = len(vectors[0])
    return [sum(v[j] for v in vectors) / n for j in range(dim)]


def oracle_class_scores(query, per_class_members, reduction, tau):
    """Per-class cosine reduction followed by softmax."""
    raw = []
    for members in per_class_members:
        if reduction == "score_mean":
            raw.append(
                sum(oracle_cosine(query, mem) for mem in members) / len(members)
            )
        elif reduction == "centroid":
            raw.append(oracle_cosine(query, oracle_centroid(members)))
        else:  # single
            assert len(members) == 1
            raw.append(oracle_cosine(query, members[0]))
    return oracle_softmax(raw, tau)


def oracle_top_k(probs, k):
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    return order[: min(k, len(probs))]


def oracle_lambda(s_image_topk, s_caption_topk, xi, eps):
    si = statistics.pstdev(s_image_topk) if len(s_image_topk) > 1 else 0.0
    sc = statistics.pstdev(s_caption_topk) if len(s_caption_topk) > 1 else 0.0
    denom = max(math.sqrt(si * si + sc * sc), eps)
    return xi * sc / denom


def oracle_fused_argmax(s_image, s_caption, k, lam):
    """Exhaustive fused-score argmax over the anchor set.

    Tie-break: higher image probability, then lower class index.
    """
    omega = oracle_top_k(s_image, k)
    best = None
    for w in omega:
        key = (s_image[w] + lam * s_caption[w], s_image[w], -w)
        if best is None or key > best[0]:
            best = (key, w)
    return best[1], omega


def oracle_ice(
    image_emb,
    caption_embs,
    per_class_members,
    reduction,
    tau,
    k,
    lambda_mode,
    xi=0.08,
    eps=1e-12,
    lambda_fixed=0.0,
):
    """Full pipeline: embeddings to fused prediction, straight from the math."""
    s_image = oracle_class_scores(image_emb, per_class_members, reduction, tau)
    cap_centroid = oracle_centroid(caption_embs)
    s_caption = oracle_class_scores(cap_centroid, per_class_members, reduction, tau)

    omega = oracle_top_k(s_image, k)
    if lambda_mode == "adaptive":
        lam = oracle_lambda(
            [s_image[w] for w in omega], [s_caption[w] for w in omega], xi, eps
        )
    elif lambda_mode == "fixed":
        lam = lambda_fixed
    else:
        lam = 0.0
    pred, omega = oracle_fused_argmax(s_image, s_caption, k, lam)
    return {
        "prediction": pred,
        "omega": omega,
        "lambda": lam,
        "s_image": s_image,
        "s_caption": s_caption,
    }
