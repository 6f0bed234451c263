"""Completion of the attribute matrices and the substitute ranking model.

Scoring blends two heads:
  substitution      w_s . [v_q * v_j ; agg_s]   (query/candidate interaction)
  personalization   w_p . [u_i * v_j ; agg_p]   (user/candidate interaction)
where agg_* are attention-weighted sums of attribute embeddings driven by the
completed attribute matrices. Either aggregated block can be ablated away, in
which case the projection covers only the product term.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .config import TrainConfig
from .data import Corpus
from .matrices import SparseAttributeMatrix
from .network import (GradientBuffer, ModelParams, predict_item_attr_batch,
                      predict_user_attr_batch)

logger = logging.getLogger(__name__)

NEGATIVE_SAMPLE_FACTOR = 1000   # rejection budget per requested negative
_ESTIMATE_CHUNK = 262144        # max cells regressed per forward pass


@dataclass
class EstimatedMatrices:
    """Dense completions: observed cells verbatim, absent cells regressed."""

    user_attr: np.ndarray       # (n_users, n_attrs)
    item_attr: np.ndarray       # (n_items, n_attrs)


def _complete(sparse: SparseAttributeMatrix, predict_rows) -> np.ndarray:
    dense = sparse.to_dense()
    mask = sparse.observed_mask()
    n_rows, n_cols = dense.shape
    block = max(1, _ESTIMATE_CHUNK // max(1, n_cols))
    for start in range(0, n_rows, block):
        rows = np.arange(start, min(start + block, n_rows))
        row_idx = np.repeat(rows, n_cols)
        col_idx = np.tile(np.arange(n_cols), len(rows))
        preds = predict_rows(row_idx, col_idx).reshape(len(rows), n_cols)
        sub = mask[rows]
        dense[rows] = np.where(sub, dense[rows], preds)
    return dense


def estimate_matrices(user_mat: SparseAttributeMatrix,
                      item_mat: SparseAttributeMatrix,
                      params: ModelParams) -> EstimatedMatrices:
    """Fill every unobserved cell with the eval-mode tower regression.

    Observed cells are copied bit-for-bit from the sparse inputs.
    """
    cap = user_mat.scale_cap
    user_attr = _complete(user_mat, lambda r, c: predict_user_attr_batch(
        params, r, c, cap))
    item_attr = _complete(item_mat, lambda r, c: predict_item_attr_batch(
        params, r, c, item_mat.scale_cap))
    return EstimatedMatrices(user_attr=user_attr, item_attr=item_attr)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def substitution_attention(query_row: np.ndarray, item_row: np.ndarray,
                           temp: float) -> np.ndarray:
    """Attention over attributes from the two items' completed rows."""
    return softmax((query_row * item_row) / temp, axis=-1)


def personalization_attention(user_row: np.ndarray, item_row: np.ndarray,
                              temp: float) -> np.ndarray:
    """Attention over attributes from a user row and an item row."""
    return softmax((user_row * item_row) / temp, axis=-1)


def aggregate_attributes(weights: np.ndarray, attr_emb: np.ndarray) -> np.ndarray:
    """Convex combination of attribute embeddings; weights sum to 1 per row."""
    if weights.shape[-1] != attr_emb.shape[0]:
        raise ValueError(f"weights cover {weights.shape[-1]} attributes, "
                         f"embedding table has {attr_emb.shape[0]}")
    return weights @ attr_emb


def _score_rows(params: ModelParams, est: EstimatedMatrices, cfg: TrainConfig,
                users: np.ndarray, queries: np.ndarray, items: np.ndarray):
    """Blended scores for row-aligned (user, query, candidate) triples.

    Returns (scores, cache) with everything backward needs.
    """
    d = params.embed_dim
    w_s, w_p = params.subst_proj, params.pers_proj
    v_q = params.item_emb[queries]
    v_j = params.item_emb[items]
    u_i = params.user_emb[users]

    y_q = est.item_attr[queries]
    y_j = est.item_attr[items]
    phi = softmax((y_q * y_j) / cfg.subst_temp, axis=-1)
    f_s = (v_q * v_j) @ w_s[:d]
    if cfg.subst_use_attrs:
        agg_s = phi @ params.attr_emb
        f_s = f_s + agg_s @ w_s[d:]

    x_i = est.user_attr[users]
    lam = softmax((x_i * y_j) / cfg.pers_temp, axis=-1)
    f_p = (u_i * v_j) @ w_p[:d]
    if cfg.pers_use_attrs:
        agg_p = lam @ params.attr_emb
        f_p = f_p + agg_p @ w_p[d:]

    g = cfg.subst_weight
    scores = g * f_s + (1.0 - g) * f_p
    cache = (users, queries, items, u_i, v_q, v_j, phi, lam)
    return scores, cache


def _score_rows_backward(params: ModelParams, cfg: TrainConfig, cache,
                         upstream: np.ndarray, grads: GradientBuffer) -> None:
    """Accumulate d(sum upstream_b * score_b)/d(params) into `grads`.

    Completed matrix rows are constants here by contract: the estimation step
    is refreshed between phases, not differentiated through.
    """
    users, queries, items, u_i, v_q, v_j, phi, lam = cache
    d = params.embed_dim
    w_s, w_p = params.subst_proj, params.pers_proj
    g_s = (upstream * cfg.subst_weight)[:, None]
    g_p = (upstream * (1.0 - cfg.subst_weight))[:, None]

    grads.subst_proj[:d] += (g_s * (v_q * v_j)).sum(axis=0)
    np.add.at(grads.item_emb, queries, g_s * (w_s[:d] * v_j))
    np.add.at(grads.item_emb, items, g_s * (w_s[:d] * v_q))
    if cfg.subst_use_attrs:
        agg_s = phi @ params.attr_emb
        grads.subst_proj[d:] += (g_s * agg_s).sum(axis=0)
        grads.attr_emb += phi.T @ (g_s * w_s[None, d:])

    grads.pers_proj[:d] += (g_p * (u_i * v_j)).sum(axis=0)
    np.add.at(grads.user_emb, users, g_p * (w_p[:d] * v_j))
    np.add.at(grads.item_emb, items, g_p * (w_p[:d] * u_i))
    if cfg.pers_use_attrs:
        agg_p = lam @ params.attr_emb
        grads.pers_proj[d:] += (g_p * agg_p).sum(axis=0)
        grads.attr_emb += lam.T @ (g_p * w_p[None, d:])


def score_substitution(query: int, item: int, params: ModelParams,
                       est: EstimatedMatrices, cfg: TrainConfig) -> float:
    """Substitution head alone for one (query, candidate) pair."""
    d = params.embed_dim
    w_s = params.subst_proj
    val = float((params.item_emb[query] * params.item_emb[item]) @ w_s[:d])
    if cfg.subst_use_attrs:
        phi = substitution_attention(est.item_attr[query], est.item_attr[item],
                                     cfg.subst_temp)
        val += float(aggregate_attributes(phi, params.attr_emb) @ w_s[d:])
    return val


def score_personalization(user: int, item: int, params: ModelParams,
                          est: EstimatedMatrices, cfg: TrainConfig) -> float:
    """Personalization head alone for one (user, candidate) pair."""
    d = params.embed_dim
    w_p = params.pers_proj
    val = float((params.user_emb[user] * params.item_emb[item]) @ w_p[:d])
    if cfg.pers_use_attrs:
        lam = personalization_attention(est.user_attr[user], est.item_attr[item],
                                        cfg.pers_temp)
        val += float(aggregate_attributes(lam, params.attr_emb) @ w_p[d:])
    return val


def triplet_score(user: int, query: int, item: int, params: ModelParams,
                  est: EstimatedMatrices, cfg: TrainConfig) -> float:
    """Convex blend of the two heads for one candidate."""
    g = cfg.subst_weight
    return (g * score_substitution(query, item, params, est, cfg)
            + (1.0 - g) * score_personalization(user, item, params, est, cfg))


def score_candidates(params: ModelParams, est: EstimatedMatrices,
                     cfg: TrainConfig, user: int, query: int,
                     items: np.ndarray) -> np.ndarray:
    """Vectorized triplet_score over a candidate array."""
    items = np.asarray(items, dtype=np.int64)
    users = np.full(len(items), user, dtype=np.int64)
    queries = np.full(len(items), query, dtype=np.int64)
    scores, _ = _score_rows(params, est, cfg, users, queries, items)
    return scores


def sample_negatives(user: int, query: int, corpus: Corpus, count: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Draw `count` negatives uniformly over items, rejecting only candidates
    that are both interacted by the user and substitutes of the query.

    Raises RuntimeError once the rejection budget (NEGATIVE_SAMPLE_FACTOR per
    requested negative) is exhausted.
    """
    interacted = corpus.user_items[user]
    subs = corpus.substitutes[query]
    out = np.empty(count, dtype=np.int64)
    found = 0
    budget = NEGATIVE_SAMPLE_FACTOR * count
    for _ in range(budget):
        cand = int(rng.integers(corpus.n_items))
        if cand in interacted and cand in subs:
            continue
        out[found] = cand
        found += 1
        if found == count:
            return out
    raise RuntimeError(
        f"negative sampling for user {user}, query {query} exhausted "
        f"{budget} draws; corpus too degenerate")


def bpr_s_loss(params: ModelParams, est: EstimatedMatrices, cfg: TrainConfig,
               users: np.ndarray, queries: np.ndarray,
               positives: np.ndarray, negatives: np.ndarray) -> float:
    """Summed pairwise logistic loss over row-aligned quadruples:
    -log sigmoid(score(i,q,j+) - score(i,q,j-)), overflow-safe."""
    pos_scores, _ = _score_rows(params, est, cfg, users, queries, positives)
    neg_scores, _ = _score_rows(params, est, cfg, users, queries, negatives)
    margins = pos_scores - neg_scores
    return float(np.logaddexp(0.0, -margins).sum())


def bpr_s_forward_backward(params: ModelParams, est: EstimatedMatrices,
                           cfg: TrainConfig, users: np.ndarray,
                           queries: np.ndarray, positives: np.ndarray,
                           negatives: np.ndarray):
    """Loss plus analytic gradients for one quadruple batch."""
    pos_scores, pos_cache = _score_rows(params, est, cfg, users, queries, positives)
    neg_scores, neg_cache = _score_rows(params, est, cfg, users, queries, negatives)
    margins = pos_scores - neg_scores
    loss = float(np.logaddexp(0.0, -margins).sum())
    # d/dm of softplus(-m) is sigmoid(m) - 1
    up_pos = expit(margins) - 1.0
    grads = GradientBuffer.zeros_like(params)
    _score_rows_backward(params, cfg, pos_cache, up_pos, grads)
    _score_rows_backward(params, cfg, neg_cache, -up_pos, grads)
    return loss, grads


@dataclass
class RankedList:
    user: int
    query: int
    items: np.ndarray
    scores: np.ndarray


def recommend_top_k(params: ModelParams, est: EstimatedMatrices,
                    cfg: TrainConfig, user: int, query: int,
                    candidates: np.ndarray, k: int) -> RankedList:
    """Rank candidates by blended score, descending; ties break toward the
    smaller item index. Duplicates in `candidates` are collapsed."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    cands = np.unique(np.asarray(candidates, dtype=np.int64))
    if len(cands) == 0:
        raise ValueError("empty candidate set")
    scores = score_candidates(params, est, cfg, user, query, cands)
    order = np.lexsort((cands, -scores))
    take = order[:k]
    return RankedList(user=user, query=query, items=cands[take],
                      scores=scores[take])
