"""Frame-level latent-region action scorer.

The score of action ``a`` on a frame is the affinity of the primary-region
features with ``W_p[a]`` plus the best affinity of any candidate secondary
region with ``W_z[a]`` (plus a per-action bias).  The winning secondary region
is a latent variable; gradients flow only to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ConfigError, Dataset, FrameSample
from .optim import StepDecaySGD
from .serialize import read_json, write_json


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


@dataclass
class ScorerParams:
    W_p: np.ndarray  # (A, D)
    W_z: np.ndarray  # (A, D)
    b: np.ndarray  # (A,)

    @property
    def num_actions(self) -> int:
        return self.W_p.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W_p.shape[1]

    @classmethod
    def init(cls, num_actions: int, feature_dim: int, seed: int, scale: float = 0.01) -> "ScorerParams":
        rng = np.random.default_rng(seed)
        W_p = rng.uniform(-scale, scale, (num_actions, feature_dim))
        W_z = rng.uniform(-scale, scale, (num_actions, feature_dim))
        return cls(W_p, W_z, np.zeros(num_actions))

    @classmethod
    def zeros(cls, num_actions: int, feature_dim: int) -> "ScorerParams":
        return cls(np.zeros((num_actions, feature_dim)), np.zeros((num_actions, feature_dim)),
                   np.zeros(num_actions))

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {"W_p": self.W_p, "W_z": self.W_z, "b": self.b}

    def copy(self) -> "ScorerParams":
        return ScorerParams(self.W_p.copy(), self.W_z.copy(), self.b.copy())

    def scaled(self, lam: float) -> "ScorerParams":
        return ScorerParams(self.W_p * lam, self.W_z * lam, self.b * lam)


@dataclass
class ScorerOutput:
    scores: np.ndarray  # (A,)
    probs: np.ndarray  # (A,)
    argmax_secondary: np.ndarray  # (A,) indices into frame.secondaries

    @property
    def label(self) -> int:
        return int(np.argmax(self.scores))


def _check_dims(params: ScorerParams, frame: FrameSample) -> None:
    D = params.feature_dim
    if frame.primary.shape != (D,) or frame.secondaries.shape[1] != D:
        raise ValueError(f"feature dimension mismatch: params expect D={D}, "
                         f"frame has {frame.primary.shape[-1]}/{frame.secondaries.shape[1]}")


def score(params: ScorerParams, frame: FrameSample, candidate_indices=None) -> ScorerOutput:
    """Score every action on one frame over the given candidate secondaries.

    ``candidate_indices=None`` uses all secondaries.  Ties in the max go to
    the lowest candidate position.
    """
    _check_dims(params, frame)
    if candidate_indices is None:
        cand = np.arange(frame.secondaries.shape[0])
    else:
        cand = np.asarray(candidate_indices, dtype=int)
        if cand.size == 0:
            raise ValueError("candidate set must be non-empty")
    sec = frame.secondaries[cand].astype(float)
    S = sec @ params.W_z.T  # (K, A)
    win = np.argmax(S, axis=0)  # first max wins
    scores = params.W_p @ frame.primary.astype(float) + params.b + S[win, np.arange(S.shape[1])]
    return ScorerOutput(scores, softmax(scores), cand[win])


def loss_and_grad(params: ScorerParams, batch) -> tuple[float, ScorerParams]:
    """Mean softmax cross-entropy over ``batch`` of ``(frame, candidates)``.

    The gradient treats each action's winning secondary as fixed, i.e. it is
    the subgradient that max pooling propagates.
    """
    if not batch:
        raise ValueError("empty batch")
    gW_p = np.zeros_like(params.W_p)
    gW_z = np.zeros_like(params.W_z)
    gb = np.zeros_like(params.b)
    total = 0.0
    for frame, cand in batch:
        out = score(params, frame, cand)
        total -= log_softmax(out.scores)[frame.label]
        g = out.probs.copy()
        g[frame.label] -= 1.0
        gW_p += np.outer(g, frame.primary)
        gW_z += g[:, None] * frame.secondaries[out.argmax_secondary].astype(float)
        gb += g
    n = len(batch)
    return total / n, ScorerParams(gW_p / n, gW_z / n, gb / n)


def sample_secondaries(frame: FrameSample, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of ``min(k, n)`` secondary indices without replacement, sorted."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = frame.secondaries.shape[0]
    if k >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))


@dataclass
class ScorerTrainConfig:
    learning_rate: float = 2e-4
    momentum: float = 0.9
    decay: float = 0.1
    decay_interval: int = 30000
    batch_size: int = 10
    num_sampled_secondaries: int = 10
    max_iterations: int = 1000
    seed: int = 0
    freeze_secondary: bool = False  # primary-only ablation: W_z pinned at 0
    init_scale: float = 0.01

    def validate(self) -> None:
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if not 0 < self.decay <= 1:
            raise ConfigError("decay must be in (0, 1]")
        if self.num_sampled_secondaries < 1 or self.batch_size < 1:
            raise ConfigError("batch_size and num_sampled_secondaries must be >= 1")
        if self.decay_interval < 1 or self.max_iterations < 0 or self.learning_rate < 0:
            raise ConfigError("decay_interval >= 1, max_iterations >= 0, learning_rate >= 0 required")


@dataclass
class TrainHistory:
    rows: list[tuple] = field(default_factory=list)  # (iteration, lr, loss)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


def init_scorer(train: Dataset, config: ScorerTrainConfig) -> ScorerParams:
    params = ScorerParams.init(train.num_actions, train.feature_dim, config.seed, config.init_scale)
    if config.freeze_secondary:
        params.W_z[:] = 0.0
    return params


def train_frame_model(train: Dataset, config: ScorerTrainConfig,
                      init: ScorerParams | None = None) -> tuple[ScorerParams, TrainHistory]:
    config.validate()
    frames = list(train.frames())
    if not frames:
        raise ConfigError("training set has no frames")
    params = init.copy() if init is not None else init_scorer(train, config)
    rng = np.random.default_rng([config.seed, 1])
    opt = StepDecaySGD(config.learning_rate, config.momentum, config.decay, config.decay_interval)
    hist = TrainHistory()
    order: list[int] = []
    cands: list[np.ndarray] = []
    pos = 0
    for it in range(config.max_iterations):
        batch = []
        while len(batch) < config.batch_size:
            if pos >= len(order):
                # new epoch: reshuffle and redraw candidate subsets
                order = rng.permutation(len(frames)).tolist()
                cands = [sample_secondaries(f, config.num_sampled_secondaries, rng) for f in frames]
                pos = 0
            i = order[pos]
            batch.append((frames[i], cands[i]))
            pos += 1
        loss, grads = loss_and_grad(params, batch)
        g = grads.named_arrays()
        if config.freeze_secondary:
            g["W_z"][:] = 0.0
        lr = opt.step(params.named_arrays(), g)
        hist.rows.append((it, lr, loss))
    return params, hist


def predict_dataset(params: ScorerParams, dataset: Dataset, use_all_secondaries: bool = True,
                    num_sampled: int = 10, seed: int = 0) -> list[list[ScorerOutput]]:
    """Per-sequence lists of per-frame outputs.

    With ``use_all_secondaries`` every proposal is a candidate; otherwise a
    seeded subsample of ``num_sampled`` is drawn per frame.
    """
    if dataset.feature_dim != params.feature_dim or dataset.num_actions != params.num_actions:
        raise ValueError("dataset and scorer dimensions differ")
    rng = np.random.default_rng([seed, 2])
    out = []
    for seq in dataset.sequences:
        outs = []
        for shot in seq.shots:
            for fr in shot.frames:
                cand = None if use_all_secondaries else sample_secondaries(fr, num_sampled, rng)
                outs.append(score(params, fr, cand))
        out.append(outs)
    return out


def save_scorer(params: ScorerParams, path, meta: dict | None = None) -> None:
    rec = {"W_p": params.W_p, "W_z": params.W_z, "b": params.b,
           "meta": {"A": params.num_actions, "D": params.feature_dim, **(meta or {})}}
    write_json(rec, path)


def load_scorer(path) -> ScorerParams:
    rec = read_json(path)
    try:
        return ScorerParams(np.asarray(rec["W_p"], float), np.asarray(rec["W_z"], float),
                            np.asarray(rec["b"], float))
    except KeyError as exc:
        raise ValueError(f"{path}: not a scorer checkpoint (missing {exc})") from exc
