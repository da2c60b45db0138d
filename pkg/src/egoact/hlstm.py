"""Two-level recurrent model over frames and shots.

Level 1 runs over every frame of a sequence (its state crosses shot
boundaries) and classifies each frame through a dense softmax head.  Level 2
consumes level 1's hidden output at the last frame of each shot and
classifies each shot.  Training minimises ``(1 - beta) * L_frames + beta *
L_shots`` where both terms are summed cross-entropies.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .data import ConfigError, ProbSequence
from .lstm import LstmParams, LstmTrace, lstm_backward, lstm_forward
from .optim import StepDecaySGD
from .scorer import log_softmax, softmax
from .serialize import read_json, write_json


class MissingInitError(RuntimeError):
    """A beta > 0 run was requested without a beta = 0 initialisation."""


class StaleTraceError(RuntimeError):
    pass


@dataclass
class HeadParams:
    W: np.ndarray  # (A, H)
    b: np.ndarray  # (A,)

    def copy(self) -> "HeadParams":
        return HeadParams(self.W.copy(), self.b.copy())


@dataclass
class HlstmParams:
    level1: LstmParams
    frame_head: HeadParams
    level2: LstmParams
    shot_head: HeadParams

    @property
    def num_actions(self) -> int:
        return self.frame_head.W.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.level1.hidden_dim

    @classmethod
    def init(cls, num_actions: int, hidden_dim: int, seed: int) -> "HlstmParams":
        rng = np.random.default_rng(seed)
        k = 1.0 / np.sqrt(hidden_dim)
        l1 = LstmParams.init(num_actions, hidden_dim, rng)
        fh = HeadParams(rng.uniform(-k, k, (num_actions, hidden_dim)), np.zeros(num_actions))
        l2 = LstmParams.init(hidden_dim, hidden_dim, rng)
        sh = HeadParams(rng.uniform(-k, k, (num_actions, hidden_dim)), np.zeros(num_actions))
        return cls(l1, fh, l2, sh)

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {
            "level1.W": self.level1.W, "level1.b": self.level1.b,
            "frame_head.W": self.frame_head.W, "frame_head.b": self.frame_head.b,
            "level2.W": self.level2.W, "level2.b": self.level2.b,
            "shot_head.W": self.shot_head.W, "shot_head.b": self.shot_head.b,
        }

    def copy(self) -> "HlstmParams":
        return HlstmParams(self.level1.copy(), self.frame_head.copy(), self.level2.copy(),
                           self.shot_head.copy())

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for a in self.named_arrays().values():
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    @classmethod
    def zeros_like(cls, other: "HlstmParams") -> "HlstmParams":
        return cls(LstmParams(np.zeros_like(other.level1.W), np.zeros_like(other.level1.b)),
                   HeadParams(np.zeros_like(other.frame_head.W), np.zeros_like(other.frame_head.b)),
                   LstmParams(np.zeros_like(other.level2.W), np.zeros_like(other.level2.b)),
                   HeadParams(np.zeros_like(other.shot_head.W), np.zeros_like(other.shot_head.b)))


# ---------------------------------------------------------------------------
# Forward / backward over a padded batch of sequences


@dataclass
class Batch:
    X: np.ndarray  # (B, T, A) frame inputs, zero-padded at the end
    frame_mask: np.ndarray  # (B, T)
    frame_labels: np.ndarray  # (B, T), -1 on padding
    shot_ends: np.ndarray  # (B, M) index of each shot's last frame
    shot_mask: np.ndarray  # (B, M)
    shot_labels: np.ndarray  # (B, M), -1 on padding


def _check_simplex(p: np.ndarray, what: str) -> None:
    if np.any(p < -1e-9) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError(f"{what}: inputs must be probability vectors")


def make_batch(seqs: list[ProbSequence]) -> Batch:
    if not seqs:
        raise ValueError("empty batch")
    B = len(seqs)
    T = max(s.probs.shape[0] for s in seqs)
    M = max(len(s.shot_lengths) for s in seqs)
    A = seqs[0].probs.shape[1]
    X = np.zeros((B, T, A))
    fm = np.zeros((B, T))
    fl = np.full((B, T), -1, dtype=int)
    se = np.zeros((B, M), dtype=int)
    sm = np.zeros((B, M))
    sl = np.full((B, M), -1, dtype=int)
    for k, s in enumerate(seqs):
        _check_simplex(s.probs, s.id)
        n, m = s.probs.shape[0], len(s.shot_lengths)
        X[k, :n] = s.probs
        fm[k, :n] = 1.0
        fl[k, :n] = s.frame_labels
        se[k, :m] = s.shot_ends
        sm[k, :m] = 1.0
        sl[k, :m] = s.shot_labels
    return Batch(X, fm, fl, se, sm, sl)


@dataclass
class Trace:
    batch: Batch
    l1: LstmTrace
    l2: LstmTrace
    frame_logits: np.ndarray  # (B, T, A)
    shot_logits: np.ndarray  # (B, M, A)
    fingerprint: str

    @property
    def frame_probs(self) -> np.ndarray:
        return softmax(self.frame_logits)

    @property
    def shot_probs(self) -> np.ndarray:
        return softmax(self.shot_logits)


def forward(params: HlstmParams, batch: Batch) -> Trace:
    l1 = lstm_forward(params.level1, batch.X)
    frame_logits = l1.h @ params.frame_head.W.T + params.frame_head.b
    B = batch.X.shape[0]
    X2 = l1.h[np.arange(B)[:, None], batch.shot_ends]  # (B, M, H)
    l2 = lstm_forward(params.level2, X2)
    shot_logits = l2.h @ params.shot_head.W.T + params.shot_head.b
    return Trace(batch, l1, l2, frame_logits, shot_logits, params.fingerprint())


def _ce_terms(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-sequence summed cross-entropy, shape (B,)."""
    lp = log_softmax(logits)
    safe = np.where(labels < 0, 0, labels)
    nll = -np.take_along_axis(lp, safe[..., None], axis=-1)[..., 0]
    return (nll * mask).sum(axis=1)


def trace_losses(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Per-sequence ``(L_frames, L_shots)``."""
    b = trace.batch
    return (_ce_terms(trace.frame_logits, b.frame_labels, b.frame_mask),
            _ce_terms(trace.shot_logits, b.shot_labels, b.shot_mask))


def backward(params: HlstmParams, trace: Trace, beta: float) -> HlstmParams:
    """Gradient of the batch-summed loss ``sum_b (1-beta) L_N[b] + beta L_M[b]``."""
    if trace.fingerprint != params.fingerprint():
        raise StaleTraceError("trace was produced with different parameters")
    b = trace.batch
    B, T, A = trace.frame_logits.shape
    M = trace.shot_logits.shape[1]

    gf = softmax(trace.frame_logits)
    gf[np.arange(B)[:, None], np.arange(T)[None, :], np.where(b.frame_labels < 0, 0, b.frame_labels)] -= 1.0
    gf *= ((1.0 - beta) * b.frame_mask)[..., None]
    gs = softmax(trace.shot_logits)
    gs[np.arange(B)[:, None], np.arange(M)[None, :], np.where(b.shot_labels < 0, 0, b.shot_labels)] -= 1.0
    gs *= (beta * b.shot_mask)[..., None]

    grads = HlstmParams.zeros_like(params)
    grads.shot_head.W[:] = np.einsum("bma,bmh->ah", gs, trace.l2.h)
    grads.shot_head.b[:] = gs.sum(axis=(0, 1))
    dH2 = gs @ params.shot_head.W
    dX2, dW2, db2 = lstm_backward(params.level2, trace.l2, dH2)
    grads.level2.W[:] = dW2
    grads.level2.b[:] = db2

    grads.frame_head.W[:] = np.einsum("bta,bth->ah", gf, trace.l1.h)
    grads.frame_head.b[:] = gf.sum(axis=(0, 1))
    dH1 = gf @ params.frame_head.W
    # shot path: scatter level-2 input grads back onto each shot's last frame
    np.add.at(dH1, (np.repeat(np.arange(B), M), b.shot_ends.ravel()),
              (dX2 * b.shot_mask[..., None]).reshape(B * M, -1))
    _, dW1, db1 = lstm_backward(params.level1, trace.l1, dH1)
    grads.level1.W[:] = dW1
    grads.level1.b[:] = db1
    return grads


# ---------------------------------------------------------------------------
# Single-sequence API


def forward_sequence(params: HlstmParams, probs: np.ndarray, shot_lengths: list[int]):
    """Returns ``(frame_probs (N, A), shot_probs (M, A), trace)``."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("empty sequence")
    seq = ProbSequence("_", probs, list(shot_lengths), [0] * len(shot_lengths))
    trace = forward(params, make_batch([seq]))
    return trace.frame_probs[0], trace.shot_probs[0], trace


def hlstm_loss_terms(frame_probs, shot_probs, frame_labels, shot_labels) -> tuple[float, float]:
    frame_probs, shot_probs = np.asarray(frame_probs), np.asarray(shot_probs)
    if len(frame_labels) != len(frame_probs) or len(shot_labels) != len(shot_probs):
        raise ValueError("label and output lengths differ")
    L_N = -float(np.sum(np.log(frame_probs[np.arange(len(frame_labels)), frame_labels])))
    L_M = -float(np.sum(np.log(shot_probs[np.arange(len(shot_labels)), shot_labels])))
    return L_N, L_M


def hlstm_loss(frame_probs, shot_probs, frame_labels, shot_labels, beta: float) -> float:
    L_N, L_M = hlstm_loss_terms(frame_probs, shot_probs, frame_labels, shot_labels)
    return (1.0 - beta) * L_N + beta * L_M


def backward_sequence(params: HlstmParams, trace: Trace, frame_labels, shot_labels, beta: float) -> HlstmParams:
    """Exact gradient of ``hlstm_loss`` for the single sequence in ``trace``."""
    b = trace.batch
    n, m = int(b.frame_mask[0].sum()), int(b.shot_mask[0].sum())
    if len(frame_labels) != n or len(shot_labels) != m:
        raise ValueError("label and output lengths differ")
    b.frame_labels[0, :n] = frame_labels
    b.shot_labels[0, :m] = shot_labels
    return backward(params, trace, beta)


# ---------------------------------------------------------------------------
# Prediction


def predict_shot(frame_probs: np.ndarray, mode: str = "average") -> tuple[int, np.ndarray]:
    """Aggregate a shot's frame probabilities.

    ``average`` is the arithmetic mean; ``linear_weighted`` weights frame t
    (0-based) of T by ``(t + 1) / sum(1..T)``.  Ties go to the lowest label.
    """
    P = np.asarray(frame_probs, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("shot must contain at least one frame")
    if mode == "average":
        v = P.mean(axis=0)
    elif mode == "linear_weighted":
        w = np.arange(1, P.shape[0] + 1, dtype=float)
        v = (w / w.sum()) @ P
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    return int(np.argmax(v)), v


def predict_frames(params: HlstmParams, seqs: list[ProbSequence], state: str = "carry",
                   batch_size: int = 64) -> list[np.ndarray]:
    """Level-1 frame probabilities per sequence.

    ``carry`` feeds every frame of a sequence through one recurrence;
    ``reset`` restarts the state at each shot (shots evaluated individually).
    """
    if state == "reset":
        parts = []
        for s in seqs:
            for sl, lab in zip(s.shot_slices(), s.shot_labels):
                parts.append(ProbSequence(s.id, s.probs[sl], [sl.stop - sl.start], [lab]))
        flat = predict_frames(params, parts, "carry", batch_size)
        out, k = [], 0
        for s in seqs:
            m = len(s.shot_lengths)
            out.append(np.concatenate(flat[k:k + m]))
            k += m
        return out
    if state != "carry":
        raise ValueError(f"unknown state mode {state!r}")
    out = []
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        b = make_batch(chunk)
        l1 = lstm_forward(params.level1, b.X)
        P = softmax(l1.h @ params.frame_head.W.T + params.frame_head.b)
        out.extend(P[k, :s.probs.shape[0]] for k, s in enumerate(chunk))
    return out


def frame_accuracy_flat(frame_probs: list[np.ndarray], seqs: list[ProbSequence]) -> float:
    """Per-sequence frame accuracy averaged over sequences."""
    accs = [float(np.mean(np.argmax(P, axis=1) == s.frame_labels)) for P, s in zip(frame_probs, seqs)]
    return float(np.mean(accs))


# ---------------------------------------------------------------------------
# Training


@dataclass
class HlstmTrainConfig:
    beta: float = 0.0
    learning_rate: float = 0.05
    momentum: float = 0.9
    decay: float = 0.1
    decay_interval: int = 30000
    batch_size: int = 6
    epochs: int = 20
    hidden_dim: int = 64
    seed: int = 0
    max_norm: float | None = 5.0

    def validate(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must be in [0, 1]")
        if not 0 <= self.momentum < 1 or not 0 < self.decay <= 1:
            raise ConfigError("momentum in [0,1) and decay in (0,1] required")
        if self.batch_size < 1 or self.epochs < 0 or self.hidden_dim < 1 or self.decay_interval < 1:
            raise ConfigError("batch_size, hidden_dim, decay_interval >= 1 and epochs >= 0 required")
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be non-negative")


HISTORY_COLUMNS = ["epoch", "lr", "L_N", "L_M", "L", "frame_acc", "shot_acc"]


@dataclass
class HlstmHistory:
    beta: float
    rows: list[tuple] = field(default_factory=list)
    best_epoch: int | None = None  # set when validation selection was used

    @property
    def columns(self) -> list[str]:
        if self.rows and len(self.rows[0]) > len(HISTORY_COLUMNS):
            return HISTORY_COLUMNS + ["val_frame_acc"]
        return list(HISTORY_COLUMNS)


def evaluate_hlstm(params: HlstmParams, seqs: list[ProbSequence], beta: float,
                   batch_size: int = 64) -> dict:
    """Mean per-sequence losses and accuracies (level-1 frames, level-2 shots)."""
    LN, LM, facc, sacc = [], [], [], []
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        tr = forward(params, make_batch(chunk))
        ln, lm = trace_losses(tr)
        LN.extend(ln)
        LM.extend(lm)
        fp, sp = tr.frame_probs, tr.shot_probs
        for k, s in enumerate(chunk):
            n, m = s.probs.shape[0], len(s.shot_lengths)
            facc.append(np.mean(np.argmax(fp[k, :n], axis=1) == s.frame_labels))
            sacc.append(np.mean(np.argmax(sp[k, :m], axis=1) == np.asarray(s.shot_labels)))
    L_N, L_M = float(np.mean(LN)), float(np.mean(LM))
    return {"L_N": L_N, "L_M": L_M, "L": (1.0 - beta) * L_N + beta * L_M,
            "frame_acc": float(np.mean(facc)), "shot_acc": float(np.mean(sacc))}


def train_hlstm(train: list[ProbSequence], config: HlstmTrainConfig, init: HlstmParams | None = None,
                force: bool = False, val: list[ProbSequence] | None = None) -> tuple[HlstmParams, HlstmHistory]:
    """SGD with momentum over whole-sequence BPTT.

    A ``beta > 0`` run must start from a ``beta = 0`` model passed as
    ``init`` unless ``force`` is set.  When ``val`` is given the returned
    parameters are those of the epoch with the best validation frame
    accuracy (earliest on ties).
    """
    config.validate()
    if not train:
        raise ConfigError("no training sequences")
    if config.beta > 0 and init is None and not force:
        raise MissingInitError("beta > 0 training needs a beta = 0 initialisation (or force=True)")
    A = train[0].probs.shape[1]
    if init is not None:
        if init.num_actions != A:
            raise ConfigError(f"init has {init.num_actions} actions, data has {A}")
        params = init.copy()
    else:
        params = HlstmParams.init(A, config.hidden_dim, config.seed)
    opt = StepDecaySGD(config.learning_rate, config.momentum, config.decay, config.decay_interval,
                       max_norm=config.max_norm)
    rng = np.random.default_rng([config.seed, 3])
    hist = HlstmHistory(config.beta)
    best = None
    if val is not None:
        best = (frame_accuracy_flat(predict_frames(params, val), val), -1, params.copy())
    lr = opt.current_lr
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(train), config.batch_size):
            chunk = [train[i] for i in order[start:start + config.batch_size]]
            tr = forward(params, make_batch(chunk))
            grads = backward(params, tr, config.beta)
            n = len(chunk)
            g = {k: v / n for k, v in grads.named_arrays().items()}
            lr = opt.step(params.named_arrays(), g)
        m = evaluate_hlstm(params, train, config.beta)
        row = (epoch, lr, m["L_N"], m["L_M"], m["L"], m["frame_acc"], m["shot_acc"])
        if val is not None:
            vacc = frame_accuracy_flat(predict_frames(params, val), val)
            row = row + (vacc,)
            if vacc > best[0]:
                best = (vacc, epoch, params.copy())
        hist.rows.append(row)
    if best is not None:
        hist.best_epoch = best[1]
        return best[2], hist
    return params, hist


def two_phase_configs(base: HlstmTrainConfig, beta: float, epochs: int | None = None,
                      learning_rate: float | None = None, decay: float | None = None,
                      decay_interval: int | None = None) -> HlstmTrainConfig:
    """Phase-2 config derived from a phase-1 config."""
    return replace(base, beta=beta,
                   epochs=base.epochs if epochs is None else epochs,
                   learning_rate=base.learning_rate if learning_rate is None else learning_rate,
                   decay=base.decay if decay is None else decay,
                   decay_interval=base.decay_interval if decay_interval is None else decay_interval)


@dataclass
class GridResult:
    best_beta: float
    best_params: HlstmParams
    rows: list[dict]  # one per beta


def beta_grid_search(train: list[ProbSequence], val: list[ProbSequence], base_config: HlstmTrainConfig,
                     init: HlstmParams, betas=(0.5, 0.6, 0.7, 0.8, 0.9)) -> GridResult:
    """Train a phase-2 model per beta from the same phase-1 ``init``.

    Selects the beta with the highest validation frame accuracy (first wins
    on ties).
    """
    betas = list(betas)
    if not betas:
        raise ConfigError("empty beta grid")
    if init is None:
        raise MissingInitError("grid search needs a phase-1 initialisation")
    rows, best = [], None
    for beta in betas:
        params, hist = train_hlstm(train, replace(base_config, beta=float(beta)), init=init)
        tr_m = evaluate_hlstm(params, train, beta)
        va_m = evaluate_hlstm(params, val, beta)
        rows.append({"beta": float(beta), "train_frame_acc": tr_m["frame_acc"],
                     "val_frame_acc": va_m["frame_acc"], "train_shot_acc": tr_m["shot_acc"],
                     "val_shot_acc": va_m["shot_acc"], "val_L": va_m["L"]})
        if best is None or va_m["frame_acc"] > best[0]:
            best = (va_m["frame_acc"], float(beta), params)
    return GridResult(best[1], best[2], rows)


# ---------------------------------------------------------------------------
# Checkpoints


def _lstm_record(p: LstmParams) -> dict:
    rec = {}
    for g in ("i", "f", "o", "g"):
        W, b = p.gate(g)
        rec[f"W_{g}"] = W
        rec[f"b_{g}"] = b
    return rec


def _lstm_from(rec: dict) -> LstmParams:
    W = np.concatenate([np.asarray(rec[f"W_{g}"], float) for g in ("i", "f", "o", "g")])
    b = np.concatenate([np.asarray(rec[f"b_{g}"], float) for g in ("i", "f", "o", "g")])
    return LstmParams(W, b)


def save_hlstm(params: HlstmParams, path, meta: dict | None = None) -> None:
    rec = {
        "level1": _lstm_record(params.level1),
        "frame_head": {"W": params.frame_head.W, "b": params.frame_head.b},
        "level2": _lstm_record(params.level2),
        "shot_head": {"W": params.shot_head.W, "b": params.shot_head.b},
        "meta": {"A": params.num_actions, "H": params.hidden_dim, **(meta or {})},
    }
    write_json(rec, path)


def load_hlstm(path) -> tuple[HlstmParams, dict]:
    rec = read_json(path)
    try:
        params = HlstmParams(
            _lstm_from(rec["level1"]),
            HeadParams(np.asarray(rec["frame_head"]["W"], float), np.asarray(rec["frame_head"]["b"], float)),
            _lstm_from(rec["level2"]),
            HeadParams(np.asarray(rec["shot_head"]["W"], float), np.asarray(rec["shot_head"]["b"], float)),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: not a hierarchical-model checkpoint (missing {exc})") from exc
    return params, rec.get("meta", {})
