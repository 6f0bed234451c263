"""Two residual regression towers over shared attribute embeddings.

Each tower consumes the concatenation of an entity embedding and an attribute
embedding (width 2d), applies `tower_depth` residual blocks
h <- h + relu(W h + b) at constant width, and maps the result through a linear
head followed by a tanh rescaled onto (1, rating_max). All gradients are
analytic; no autodiff anywhere.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig

logger = logging.getLogger(__name__)

INIT_SCALE = 0.05


@dataclass
class ModelParams:
    user_emb: np.ndarray        # (n_users, d)
    item_emb: np.ndarray        # (n_items, d)
    attr_emb: np.ndarray        # (n_attrs, d), shared by both towers
    user_tower_w: np.ndarray    # (depth, 2d, 2d)
    user_tower_b: np.ndarray    # (depth, 2d)
    item_tower_w: np.ndarray    # (depth, 2d, 2d)
    item_tower_b: np.ndarray    # (depth, 2d)
    user_head: np.ndarray       # (2d,)
    item_head: np.ndarray       # (2d,)
    subst_proj: np.ndarray      # (2d,) or (d,) under the reduced ablation
    pers_proj: np.ndarray       # (2d,) or (d,)

    def tensors(self) -> dict:
        """Name -> array view, in a fixed serialization order."""
        return {name: getattr(self, name) for name in (
            "user_emb", "item_emb", "attr_emb",
            "user_tower_w", "user_tower_b", "item_tower_w", "item_tower_b",
            "user_head", "item_head", "subst_proj", "pers_proj")}

    @property
    def embed_dim(self) -> int:
        return self.user_emb.shape[1]

    @property
    def tower_depth(self) -> int:
        return self.user_tower_w.shape[0]


def init_params(n_users: int, n_items: int, n_attrs: int, cfg: TrainConfig,
                seed) -> ModelParams:
    """Draw all weights uniformly from [-INIT_SCALE, INIT_SCALE]; biases zero.

    Tensors are drawn in a fixed order so a given seed always yields the same
    model. `seed` may be an int or anything numpy accepts as one.
    """
    rng = np.random.default_rng(seed)
    d, dh, depth = cfg.embed_dim, cfg.hidden_dim, cfg.tower_depth

    def draw(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

    proj_dim = dh  # component-product block plus aggregated-attribute block
    subst_proj = draw(proj_dim if cfg.subst_use_attrs else d)
    pers_proj = draw(proj_dim if cfg.pers_use_attrs else d)
    return ModelParams(
        user_emb=draw(n_users, d),
        item_emb=draw(n_items, d),
        attr_emb=draw(n_attrs, d),
        user_tower_w=draw(depth, dh, dh),
        user_tower_b=np.zeros((depth, dh)),
        item_tower_w=draw(depth, dh, dh),
        item_tower_b=np.zeros((depth, dh)),
        user_head=draw(dh),
        item_head=draw(dh),
        subst_proj=subst_proj,
        pers_proj=pers_proj)


@dataclass
class GradientBuffer:
    """Same shapes as ModelParams, accumulated in place."""

    user_emb: np.ndarray
    item_emb: np.ndarray
    attr_emb: np.ndarray
    user_tower_w: np.ndarray
    user_tower_b: np.ndarray
    item_tower_w: np.ndarray
    item_tower_b: np.ndarray
    user_head: np.ndarray
    item_head: np.ndarray
    subst_proj: np.ndarray
    pers_proj: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "GradientBuffer":
        return cls(**{k: np.zeros_like(v) for k, v in params.tensors().items()})

    def tensors(self) -> dict:
        return {name: getattr(self, name) for name in params_tensor_names()}

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors().values())


def params_tensor_names() -> tuple:
    return ("user_emb", "item_emb", "attr_emb",
            "user_tower_w", "user_tower_b", "item_tower_w", "item_tower_b",
            "user_head", "item_head", "subst_proj", "pers_proj")


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout mask: zeros with probability `rate`, survivors scaled
    by 1/(1-rate) so the expectation is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def residual_forward(h0: np.ndarray, weights: np.ndarray, biases: np.ndarray,
                     masks=None):
    """Run h <- h + mask * relu(W h + b) over all blocks.

    h0: (batch, 2d). masks: optional per-block list of (batch, 2d) dropout
    masks applied to the relu branch only; the skip path is never masked.
    Returns (output, cache) where cache holds what backward needs.
    """
    h = h0
    cache = []
    for k in range(weights.shape[0]):
        z = h @ weights[k].T + biases[k]
        branch = np.maximum(z, 0.0)
        mask = None if masks is None else masks[k]
        if mask is not None:
            branch = branch * mask
        cache.append((h, z, mask))
        h = h + branch
        if not np.isfinite(h).all():
            raise FloatingPointError(f"non-finite activation after residual block {k}")
    return h, cache


def residual_backward(grad_out: np.ndarray, weights: np.ndarray, cache):
    """Backprop through the residual stack.

    Returns (grad_h0, grad_weights, grad_biases) with grad_weights/biases
    stacked like the parameter tensors.
    """
    depth = weights.shape[0]
    grad_w = np.zeros_like(weights)
    grad_b = np.zeros((depth, weights.shape[1]))
    g = grad_out
    for k in range(depth - 1, -1, -1):
        h_in, z, mask = cache[k]
        gate = (z > 0.0).astype(np.float64)
        if mask is not None:
            gate = gate * mask
        gz = g * gate
        grad_w[k] = gz.T @ h_in
        grad_b[k] = gz.sum(axis=0)
        g = g + gz @ weights[k]
    return g, grad_w, grad_b


def tanh_rescaled(r, rating_max: float):
    """Monotone squash of the real line onto (1, rating_max):
    (rating_max - 1)/2 * tanh(r) + (rating_max + 1)/2."""
    return 0.5 * (rating_max - 1.0) * np.tanh(r) + 0.5 * (rating_max + 1.0)


def tanh_rescaled_grad(r, rating_max: float):
    t = np.tanh(r)
    return 0.5 * (rating_max - 1.0) * (1.0 - t * t)


def _tower_predict(entity_rows: np.ndarray, attr_rows: np.ndarray,
                   weights: np.ndarray, biases: np.ndarray, head: np.ndarray,
                   rating_max: float, masks=None):
    h0 = np.concatenate([entity_rows, attr_rows], axis=1)
    h_out, cache = residual_forward(h0, weights, biases, masks)
    r = h_out @ head
    return tanh_rescaled(r, rating_max), (h_out, r, cache)


def predict_user_attribute(params: ModelParams, user: int, attr: int,
                           rating_max: float = 5.0) -> float:
    """Eval-mode regression of one user-attribute cell."""
    pred, _ = _tower_predict(params.user_emb[[user]], params.attr_emb[[attr]],
                             params.user_tower_w, params.user_tower_b,
                             params.user_head, rating_max)
    return float(pred[0])


def predict_item_attribute(params: ModelParams, item: int, attr: int,
                           rating_max: float = 5.0) -> float:
    pred, _ = _tower_predict(params.item_emb[[item]], params.attr_emb[[attr]],
                             params.item_tower_w, params.item_tower_b,
                             params.item_head, rating_max)
    return float(pred[0])


def predict_user_attr_batch(params: ModelParams, users: np.ndarray,
                            attrs: np.ndarray, rating_max: float,
                            masks=None) -> np.ndarray:
    pred, _ = _tower_predict(params.user_emb[users], params.attr_emb[attrs],
                             params.user_tower_w, params.user_tower_b,
                             params.user_head, rating_max, masks)
    return pred


def predict_item_attr_batch(params: ModelParams, items: np.ndarray,
                            attrs: np.ndarray, rating_max: float,
                            masks=None) -> np.ndarray:
    pred, _ = _tower_predict(params.item_emb[items], params.attr_emb[attrs],
                             params.item_tower_w, params.item_tower_b,
                             params.item_head, rating_max, masks)
    return pred


def phase1_loss(params: ModelParams, user_cells, item_cells,
                rating_max: float = 5.0) -> float:
    """Summed squared error over observed cells of both matrices (eval mode).

    user_cells/item_cells: (row_idx, attr_idx, target) triples of arrays;
    either may be None or empty.
    """
    total = 0.0
    if user_cells is not None and len(user_cells[0]):
        rows, attrs, targets = user_cells
        pred = predict_user_attr_batch(params, rows, attrs, rating_max)
        total += float(((pred - targets) ** 2).sum())
    if item_cells is not None and len(item_cells[0]):
        rows, attrs, targets = item_cells
        pred = predict_item_attr_batch(params, rows, attrs, rating_max)
        total += float(((pred - targets) ** 2).sum())
    return total


def _tower_backward(params: ModelParams, grads: GradientBuffer, side: str,
                    rows: np.ndarray, attrs: np.ndarray, targets: np.ndarray,
                    rating_max: float, masks=None) -> float:
    """Forward + backward for one tower's squared loss; accumulates into
    `grads` and returns the loss contribution."""
    d = params.embed_dim
    if side == "user":
        emb, tower_w, tower_b, head = (params.user_emb, params.user_tower_w,
                                       params.user_tower_b, params.user_head)
        g_emb, g_tw, g_tb, g_head = (grads.user_emb, grads.user_tower_w,
                                     grads.user_tower_b, grads.user_head)
    else:
        emb, tower_w, tower_b, head = (params.item_emb, params.item_tower_w,
                                       params.item_tower_b, params.item_head)
        g_emb, g_tw, g_tb, g_head = (grads.item_emb, grads.item_tower_w,
                                     grads.item_tower_b, grads.item_head)
    pred, (h_out, r, cache) = _tower_predict(emb[rows], params.attr_emb[attrs],
                                             tower_w, tower_b, head,
                                             rating_max, masks)
    err = pred - targets
    loss = float((err ** 2).sum())
    dr = 2.0 * err * tanh_rescaled_grad(r, rating_max)
    g_head += h_out.T @ dr
    grad_h = dr[:, None] * head[None, :]
    grad_h0, gw, gb = residual_backward(grad_h, tower_w, cache)
    g_tw += gw
    g_tb += gb
    np.add.at(g_emb, rows, grad_h0[:, :d])
    np.add.at(grads.attr_emb, attrs, grad_h0[:, d:])
    return loss


def phase1_forward_backward(params: ModelParams, user_cells, item_cells,
                            rating_max: float, dropout: float = 0.0,
                            rng: np.random.Generator | None = None):
    """Loss and analytic gradients for one regression batch.

    With dropout > 0 an rng must be supplied; a fresh mask is drawn per
    residual block and tower.
    """
    if dropout > 0.0 and rng is None:
        raise ValueError("dropout requires an rng")
    grads = GradientBuffer.zeros_like(params)
    depth = params.tower_depth
    dh = 2 * params.embed_dim
    loss = 0.0
    for side, cells in (("user", user_cells), ("item", item_cells)):
        if cells is None or not len(cells[0]):
            continue
        rows, attrs, targets = cells
        masks = None
        if dropout > 0.0:
            masks = [dropout_mask((len(rows), dh), dropout, rng)
                     for _ in range(depth)]
        loss += _tower_backward(params, grads, side, rows, attrs,
                                np.asarray(targets, dtype=np.float64),
                                rating_max, masks)
    return loss, grads


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls(m={k: np.zeros_like(t) for k, t in params.tensors().items()},
                   v={k: np.zeros_like(t) for k, t in params.tensors().items()})


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(params: ModelParams, grads: GradientBuffer, state: AdamState,
              lr: float) -> ModelParams:
    """One in-place Adam update with bias correction.

    A batch with any non-finite gradient is skipped entirely (logged), leaving
    parameters and moments untouched.
    """
    if not grads.all_finite():
        logger.warning("adam_step: non-finite gradient, update skipped")
        return params
    state.step += 1
    t = state.step
    correct1 = 1.0 - ADAM_BETA1 ** t
    correct2 = 1.0 - ADAM_BETA2 ** t
    for name, g in grads.tensors().items():
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        update = (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)
        getattr(params, name)[...] -= lr * update
    return params
