"""Alternating two-phase training loop and binary checkpointing.

Each round runs `phase1_steps` regression batches (both towers, shared Adam
state), re-estimates the completed attribute matrices, then runs
`phase2_steps` ranking batches against those frozen completions. Rounds stop
at `rounds_max` or when the relative improvement of the mean per-pair ranking
loss falls below `convergence_tol`.
"""

import dataclasses
import io
import json
import logging
import os
import struct

import numpy as np

from .config import RunConfig, TrainConfig
from .data import Corpus, SplitTriplets
from .matrices import build_matrices
from .network import (AdamState, ModelParams, adam_step, init_params,
                      phase1_forward_backward)
from .ranking import (EstimatedMatrices, bpr_s_forward_backward,
                      estimate_matrices, sample_negatives)

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"A2CFCKPT"
CHECKPOINT_FORMAT = 1


def save_checkpoint(path: str, params: ModelParams, cfg: TrainConfig) -> None:
    """Serialize config and parameter tensors to one binary file.

    Layout: 8-byte magic, u32 header length, UTF-8 JSON header (format
    version, config, tensor manifest), then raw little-endian float64 tensor
    bytes in manifest order. Identical params yield identical bytes.
    """
    tensors = params.tensors()
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": dataclasses.asdict(cfg),
        "tensors": [[name, list(t.shape)] for name, t in tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for _, t in tensors.items():
        buf.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str) -> tuple:
    """Read a checkpoint back into (ModelParams, TrainConfig)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: corrupt checkpoint header: {exc}") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format "
                         f"{header.get('format')!r}")
    cfg = TrainConfig(**header["config"])
    offset = 12 + hlen
    fields = {}
    for name, shape in header["tensors"]:
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = size * 8
        if offset + nbytes > len(raw):
            raise ValueError(f"{path}: truncated checkpoint at tensor {name!r}")
        arr = np.frombuffer(raw[offset:offset + nbytes], dtype="<f8").astype(
            np.float64).reshape(shape)
        fields[name] = arr.copy()
        offset += nbytes
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return ModelParams(**fields), cfg


def checkpoint_roundtrip(params: ModelParams, cfg: TrainConfig,
                         path: str) -> ModelParams:
    """Save, reload, and verify bit-identity of every tensor."""
    save_checkpoint(path, params, cfg)
    loaded, _ = load_checkpoint(path)
    for name, t in params.tensors().items():
        back = getattr(loaded, name)
        if t.shape != back.shape or not np.array_equal(
                t.view(np.uint64), back.view(np.uint64)):
            raise AssertionError(f"checkpoint roundtrip altered tensor {name!r}")
    return loaded


@dataclasses.dataclass
class TrainResult:
    params: ModelParams
    est: EstimatedMatrices
    user_mat: object
    item_mat: object
    history: list
    rounds_run: int
    converged: bool
    final_loss: float | None


def _cell_arrays(mat) -> tuple:
    keys = sorted(mat.entries)
    rows = np.array([r for r, _ in keys], dtype=np.int64)
    cols = np.array([c for _, c in keys], dtype=np.int64)
    vals = np.array([mat.entries[k] for k in keys], dtype=np.float64)
    return rows, cols, vals


class _Log:
    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8") if path else None

    def line(self, text: str) -> None:
        logger.debug("%s", text)
        if self.fh:
            self.fh.write(text + "\n")

    def close(self) -> None:
        if self.fh:
            self.fh.close()


def train_pipeline(corpus: Corpus, splits: SplitTriplets, run: RunConfig,
                   log_path: str | None = None,
                   diag_dir: str | None = None) -> TrainResult:
    """Run the full alternating optimization and return the trained model.

    Child seeds are derived from run.seed in a fixed order (init, phase-1
    order, dropout, phase-2 order, negatives), so results are reproducible
    bit-for-bit for a given corpus and config.
    """
    cfg = run.train
    user_mat, item_mat, _ = build_matrices(corpus, cfg.rating_max)
    seeds = np.random.SeedSequence(run.seed).spawn(5)
    init_seed, p1_seed, drop_seed, p2_seed, neg_seed = seeds
    params = init_params(corpus.n_users, corpus.n_items, corpus.n_attrs,
                         cfg, init_seed)
    p1_rng = np.random.default_rng(p1_seed)
    drop_rng = np.random.default_rng(drop_seed)
    p2_rng = np.random.default_rng(p2_seed)
    neg_rng = np.random.default_rng(neg_seed)
    adam_p1 = AdamState.zeros_like(params)
    adam_p2 = AdamState.zeros_like(params)

    u_rows, u_cols, u_vals = _cell_arrays(user_mat)
    i_rows, i_cols, i_vals = _cell_arrays(item_mat)
    n_user_cells = len(u_rows)
    cells = np.arange(n_user_cells + len(i_rows))
    train = splits.train
    if len(train) == 0:
        raise ValueError("empty training split")

    log = _Log(log_path)
    log.line(f"corpus users={corpus.n_users} items={corpus.n_items} "
             f"attrs={corpus.n_attrs} train={len(train)} "
             f"valid={len(splits.valid)} test={len(splits.test)}")
    history = []
    est = None
    prev_loss = None
    final_loss = None
    converged = False
    rounds_run = 0

    def fail(round_no, phase, step, value):
        if diag_dir:
            os.makedirs(diag_dir, exist_ok=True)
            save_checkpoint(os.path.join(diag_dir, "diagnostic.ckpt"), params, cfg)
        log.close()
        raise FloatingPointError(
            f"non-finite loss {value!r} in round {round_no} phase {phase} "
            f"step {step}")

    cell_cursor = [np.empty(0, dtype=np.int64)]
    trip_cursor = [np.empty(0, dtype=np.int64)]

    def next_batch(pool, cursor, size, rng):
        while len(cursor[0]) < size:
            cursor[0] = np.concatenate([cursor[0], rng.permutation(pool)])
        batch, cursor[0] = cursor[0][:size], cursor[0][size:]
        return batch

    for round_no in range(1, run.rounds_max + 1):
        rounds_run = round_no
        p1_steps = 0
        p1_losses = []
        for step in range(1, run.phase1_steps + 1):
            p1_steps += 1
            batch = next_batch(cells, cell_cursor, min(cfg.batch_size, len(cells)),
                               p1_rng)
            um = batch[batch < n_user_cells]
            im = batch[batch >= n_user_cells] - n_user_cells
            user_cells = (u_rows[um], u_cols[um], u_vals[um]) if len(um) else None
            item_cells = (i_rows[im], i_cols[im], i_vals[im]) if len(im) else None
            loss, grads = phase1_forward_backward(
                params, user_cells, item_cells, cfg.rating_max,
                dropout=cfg.dropout, rng=drop_rng)
            if not np.isfinite(loss):
                fail(round_no, 1, step, loss)
            adam_step(params, grads, adam_p1, cfg.learning_rate)
            p1_losses.append(loss)
            if step == 1 or step % 50 == 0 or step == run.phase1_steps:
                log.line(f"round={round_no} phase=1 step={step} loss={loss:.6f}")
        history.append({"round": round_no, "phase": 1, "steps": p1_steps,
                        "losses": p1_losses})

        est = estimate_matrices(user_mat, item_mat, params)
        log.line(f"round={round_no} estimated matrices refreshed")

        pair_loss_sum = 0.0
        pair_count = 0
        p2_steps = 0
        p2_losses = []
        trip_idx = np.arange(len(train))
        for step in range(1, run.phase2_steps + 1):
            p2_steps += 1
            batch = next_batch(trip_idx, trip_cursor,
                               min(cfg.batch_size, len(train)), p2_rng)
            rows = train[batch]
            neg = np.stack([sample_negatives(int(u), int(q), corpus,
                                             cfg.negatives, neg_rng)
                            for u, q, _ in rows])
            users = np.repeat(rows[:, 0], cfg.negatives)
            queries = np.repeat(rows[:, 1], cfg.negatives)
            positives = np.repeat(rows[:, 2], cfg.negatives)
            negatives = neg.reshape(-1)
            loss, grads = bpr_s_forward_backward(params, est, cfg, users,
                                                 queries, positives, negatives)
            if not np.isfinite(loss):
                fail(round_no, 2, step, loss)
            adam_step(params, grads, adam_p2, cfg.learning_rate)
            pair_loss_sum += loss
            pair_count += len(users)
            p2_losses.append(loss / len(users))
            if step == 1 or step % 50 == 0 or step == run.phase2_steps:
                log.line(f"round={round_no} phase=2 step={step} "
                         f"loss={loss:.6f} per_pair={loss / len(users):.6f}")
        round_loss = pair_loss_sum / pair_count if pair_count else None
        history.append({"round": round_no, "phase": 2, "steps": p2_steps,
                        "losses": p2_losses, "loss": round_loss})
        if round_loss is None:
            log.line(f"round={round_no} done (no ranking steps); stopping")
            break
        log.line(f"round={round_no} mean_pair_loss={round_loss:.6f}")
        final_loss = round_loss
        if prev_loss is not None and prev_loss > 0.0:
            improvement = (prev_loss - round_loss) / prev_loss
            if improvement < run.convergence_tol:
                converged = True
                log.line(f"converged: relative improvement "
                         f"{improvement:.6f} < {run.convergence_tol}")
                break
        prev_loss = round_loss

    est = estimate_matrices(user_mat, item_mat, params)
    log.line(f"training finished after {rounds_run} round(s), "
             f"converged={converged}")
    log.close()
    return TrainResult(params=params, est=est, user_mat=user_mat,
                       item_mat=item_mat, history=history,
                       rounds_run=rounds_run, converged=converged,
                       final_loss=final_loss)
