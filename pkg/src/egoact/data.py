"""Dataset schema, JSON-lines I/O, split protocols and synthetic generators.

A dataset is a list of sequences (one activity performed by one subject),
each an ordered list of shots, each shot an ordered run of frames that share
one action label.  Every frame carries a primary feature vector and a bag of
secondary feature vectors; the convolutional extractor that produced them is
not part of this package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence as Seq

import numpy as np

FLOAT_FMT = "%.9g"

_VERBS = ("take", "open", "close", "put", "pour", "spread", "fold", "scoop", "shake", "stir")
_OBJECTS = ("bread", "cheese", "ham", "jam", "peanut", "honey", "cup", "water", "mustard", "spoon")


class DatasetError(ValueError):
    """Raised on malformed or inconsistent dataset content."""


class ConfigError(ValueError):
    """Raised on an invalid generator or training configuration."""


@dataclass(frozen=True)
class ActionLabel:
    id: int
    verb: str
    object: str


@dataclass
class FrameSample:
    primary: np.ndarray  # (D,)
    secondaries: np.ndarray  # (n, D), n >= 1
    label: int


@dataclass
class Shot:
    label: int
    frames: list[FrameSample]


@dataclass
class Sequence:
    id: str
    subject: str
    shots: list[Shot]
    activity: str | None = None
    provenance: dict | None = None

    @property
    def shot_labels(self) -> list[int]:
        return [s.label for s in self.shots]

    @property
    def frame_labels(self) -> list[int]:
        return [s.label for s in self.shots for _ in s.frames]

    @property
    def num_frames(self) -> int:
        return sum(len(s.frames) for s in self.shots)


@dataclass
class Dataset:
    actions: list[ActionLabel]
    sequences: list[Sequence]
    feature_dim: int

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def subset(self, ids: Iterable[str]) -> "Dataset":
        keep = set(ids)
        return Dataset(self.actions, [s for s in self.sequences if s.id in keep], self.feature_dim)

    def frames(self) -> Iterable[FrameSample]:
        for seq in self.sequences:
            for shot in seq.shots:
                yield from shot.frames

    def validate(self) -> None:
        ids = [a.id for a in self.actions]
        if ids != list(range(len(ids))):
            raise DatasetError(f"action ids must be dense 0..A-1, got {ids}")
        pairs = [(a.verb, a.object) for a in self.actions]
        if len(set(pairs)) != len(pairs):
            raise DatasetError("(verb, object) pairs must be unique")
        if self.feature_dim < 1:
            raise DatasetError("feature_dim must be positive")
        seen = set()
        A, D = len(self.actions), self.feature_dim
        for seq in self.sequences:
            if seq.id in seen:
                raise DatasetError(f"duplicate sequence id {seq.id!r}")
            seen.add(seq.id)
            if not seq.shots:
                raise DatasetError(f"sequence {seq.id!r} has no shots")
            for j, shot in enumerate(seq.shots):
                where = f"sequence {seq.id!r} shot {j}"
                if not 0 <= shot.label < A:
                    raise DatasetError(f"{where}: unknown label id {shot.label}")
                if not shot.frames:
                    raise DatasetError(f"{where}: shot has no frames")
                for i, fr in enumerate(shot.frames):
                    fw = f"{where} frame {i}"
                    if fr.label != shot.label:
                        raise DatasetError(f"{fw}: frame label {fr.label} != shot label {shot.label}")
                    if fr.primary.shape != (D,):
                        raise DatasetError(f"{fw}: primary has dim {fr.primary.shape[-1]}, expected {D}")
                    if fr.secondaries.ndim != 2 or fr.secondaries.shape[0] < 1:
                        raise DatasetError(f"{fw}: needs at least one secondary vector")
                    if fr.secondaries.shape[1] != D:
                        raise DatasetError(
                            f"{fw}: secondary has dim {fr.secondaries.shape[1]}, expected {D}")
                    if not (np.all(np.isfinite(fr.primary)) and np.all(np.isfinite(fr.secondaries))):
                        raise DatasetError(f"{fw}: non-finite feature value")


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Structural equality with exact array comparison."""
    if a.actions != b.actions or a.feature_dim != b.feature_dim:
        return False
    if len(a.sequences) != len(b.sequences):
        return False
    for sa, sb in zip(a.sequences, b.sequences):
        if (sa.id, sa.subject, sa.activity, sa.provenance) != (sb.id, sb.subject, sb.activity, sb.provenance):
            return False
        if sa.shot_labels != sb.shot_labels:
            return False
        for ha, hb in zip(sa.shots, sb.shots):
            if len(ha.frames) != len(hb.frames):
                return False
            for fa, fb in zip(ha.frames, hb.frames):
                if not (np.array_equal(fa.primary, fb.primary) and np.array_equal(fa.secondaries, fb.secondaries)):
                    return False
    return True


# ---------------------------------------------------------------------------
# JSON-lines I/O


def _vec(v: np.ndarray) -> str:
    return "[" + ",".join(FLOAT_FMT % x for x in v.tolist()) + "]"


def _encode(obj) -> str:
    # json.dumps with sort_keys, except float arrays get fixed-precision text
    if isinstance(obj, np.ndarray):
        if obj.ndim == 1:
            return _vec(obj)
        return "[" + ",".join(_vec(row) for row in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(json.dumps(k) + ":" + _encode(obj[k]) for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(x) for x in obj) + "]"
    return json.dumps(obj)


def _sequence_record(seq: Sequence) -> dict:
    rec = {
        "id": seq.id,
        "subject": seq.subject,
        "shots": [
            {"label": shot.label,
             "frames": [{"primary": f.primary, "secondaries": f.secondaries} for f in shot.frames]}
            for shot in seq.shots
        ],
    }
    if seq.activity is not None:
        rec["activity"] = seq.activity
    if seq.provenance is not None:
        rec["provenance"] = seq.provenance
    return rec


def dumps_dataset(dataset: Dataset) -> str:
    dataset.validate()
    if not dataset.sequences:
        raise DatasetError("refusing to write a dataset with no sequences")
    header = {"actions": [{"id": a.id, "verb": a.verb, "object": a.object} for a in dataset.actions],
              "feature_dim": dataset.feature_dim}
    lines = [_encode(header)] + [_encode(_sequence_record(s)) for s in dataset.sequences]
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    text = dumps_dataset(dataset)
    Path(path).write_text(text, encoding="utf-8")


def _parse_sequence(rec: dict, lineno: int) -> Sequence:
    try:
        shots = []
        for shot in rec["shots"]:
            label = int(shot["label"])
            frames = []
            for fr in shot["frames"]:
                prim = np.asarray(fr["primary"], dtype=np.float32)
                sec = np.asarray(fr["secondaries"], dtype=np.float32)
                if sec.ndim == 1 and sec.size == 0:
                    sec = sec.reshape(0, prim.shape[0] if prim.ndim == 1 else 0)
                frames.append(FrameSample(prim, sec, label))
            shots.append(Shot(label, frames))
        return Sequence(str(rec["id"]), str(rec["subject"]), shots,
                        activity=rec.get("activity"), provenance=rec.get("provenance"))
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"line {lineno}: malformed sequence record ({exc})") from exc


def loads_dataset(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines()]
    if not lines or not lines[0].strip():
        raise DatasetError("line 1: missing header")
    records = []
    for i, ln in enumerate(lines, start=1):
        if not ln.strip():
            continue
        try:
            records.append((i, json.loads(ln)))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {i}: invalid JSON ({exc.msg})") from exc
    (hl, header), body = records[0], records[1:]
    try:
        actions = [ActionLabel(int(a["id"]), str(a["verb"]), str(a["object"])) for a in header["actions"]]
        dim = int(header["feature_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"line {hl}: malformed header ({exc})") from exc
    ds = Dataset(actions, [_parse_sequence(rec, i) for i, rec in body], dim)
    ds.validate()
    return ds


def load_dataset(path: str | Path) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Splits


def make_splits(dataset: Dataset, protocol: str | Seq[str] = "loso") -> list[tuple[Dataset, Dataset]]:
    """Train/test splits.

    ``protocol="loso"`` holds out each subject in turn (sorted by subject
    name).  A list of sequence ids gives one fixed split whose test set is
    exactly those sequences.
    """
    all_ids = [s.id for s in dataset.sequences]
    if isinstance(protocol, str):
        if protocol not in ("loso", "leave_one_subject_out"):
            raise ConfigError(f"unknown split protocol {protocol!r}")
        subjects = sorted({s.subject for s in dataset.sequences})
        if len(subjects) < 2:
            raise ConfigError("leave-one-subject-out needs at least two subjects")
        out = []
        for subj in subjects:
            test = [s.id for s in dataset.sequences if s.subject == subj]
            train = [i for i in all_ids if i not in set(test)]
            out.append((dataset.subset(train), dataset.subset(test)))
        return out
    test = set(protocol)
    unknown = test - set(all_ids)
    if unknown:
        raise ConfigError(f"unknown sequence ids in fixed split: {sorted(unknown)}")
    return [(dataset.subset(i for i in all_ids if i not in test), dataset.subset(test))]


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass
class SynthConfig:
    num_actions: int = 4
    feature_dim: int = 8
    frames_per_shot: tuple[int, int] = (3, 6)
    shots_per_sequence: tuple[int, int] = (3, 6)
    num_sequences: int = 8
    num_subjects: int = 4
    noise_sigma: float = 0.1
    num_distractor_secondaries: int = 3
    discriminative_placement: str = "primary"  # primary | secondary_only | both
    transition_matrix: str | list = "uniform"
    seed: int = 0
    # std of a pure-noise vector entry is distractor_scale / sqrt(D), so noise
    # vectors have the same expected norm as the unit prototypes
    distractor_scale: float = 1.0

    def transitions(self) -> np.ndarray:
        A = self.num_actions
        if isinstance(self.transition_matrix, str):
            if self.transition_matrix != "uniform":
                raise ConfigError(f"unknown transition setting {self.transition_matrix!r}")
            return np.full((A, A), 1.0 / A)
        T = np.asarray(self.transition_matrix, dtype=float)
        if T.shape != (A, A):
            raise ConfigError(f"transition matrix must be {A}x{A}, got {T.shape}")
        if np.any(T < 0) or np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-9):
            raise ConfigError("transition matrix rows must be non-negative and sum to 1")
        return T

    def validate(self) -> None:
        if self.num_actions < 1 or self.feature_dim < 1:
            raise ConfigError("num_actions and feature_dim must be positive")
        for name in ("frames_per_shot", "shots_per_sequence"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigError(f"{name} must satisfy 1 <= lo <= hi")
        if self.num_sequences < 1 or not 1 <= self.num_subjects:
            raise ConfigError("num_sequences and num_subjects must be positive")
        if self.noise_sigma < 0 or self.num_distractor_secondaries < 0 or self.distractor_scale < 0:
            raise ConfigError("noise_sigma, distractor count and scale must be non-negative")
        if self.discriminative_placement not in ("primary", "secondary_only", "both"):
            raise ConfigError(f"bad placement {self.discriminative_placement!r}")
        if self.discriminative_placement == "primary" and self.num_distractor_secondaries < 1:
            raise ConfigError("placement=primary needs at least one (distractor) secondary")
        self.transitions()


def make_actions(num_actions: int) -> list[ActionLabel]:
    nv = len(_VERBS)
    out = []
    for i in range(num_actions):
        verb = _VERBS[i % nv]
        obj = _OBJECTS[(i // nv) % len(_OBJECTS)]
        if i >= nv * len(_OBJECTS):
            obj = f"{obj}{i // (nv * len(_OBJECTS))}"
        out.append(ActionLabel(i, verb, obj))
    return out


def make_prototypes(num_actions: int, dim: int, rng: np.random.Generator,
                    max_dot: float = 0.5, max_tries: int = 10000) -> np.ndarray:
    """Random unit vectors with all pairwise dot products below ``max_dot``."""
    for _ in range(max_tries):
        U = rng.standard_normal((num_actions, dim))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        G = U @ U.T
        np.fill_diagonal(G, -np.inf)
        if num_actions < 2 or G.max() < max_dot:
            return U
    raise ConfigError(f"could not draw {num_actions} separated prototypes in dimension {dim}")


def markov_chain(T: np.ndarray, length: int, rng: np.random.Generator) -> list[int]:
    A = T.shape[0]
    cum = np.cumsum(T, axis=1)
    labels = [int(rng.integers(A))]
    for _ in range(length - 1):
        u = rng.random()
        labels.append(int(min(np.searchsorted(cum[labels[-1]], u, side="right"), A - 1)))
    return labels


def synth_generate(config: SynthConfig) -> Dataset:
    config.validate()
    rng = np.random.default_rng(config.seed)
    A, D = config.num_actions, config.feature_dim
    protos = make_prototypes(A, D, rng)
    T = config.transitions()
    noise_std = config.distractor_scale / np.sqrt(D)
    place = config.discriminative_placement

    def noise_vec(n=None):
        shape = (D,) if n is None else (n, D)
        return rng.standard_normal(shape) * noise_std

    sequences = []
    for k in range(config.num_sequences):
        n_shots = int(rng.integers(config.shots_per_sequence[0], config.shots_per_sequence[1] + 1))
        labels = markov_chain(T, n_shots, rng)
        shots = []
        for lab in labels:
            n_frames = int(rng.integers(config.frames_per_shot[0], config.frames_per_shot[1] + 1))
            frames = []
            for _ in range(n_frames):
                signal = protos[lab] + rng.standard_normal(D) * config.noise_sigma
                primary = signal if place in ("primary", "both") else noise_vec()
                n_sec = config.num_distractor_secondaries
                if place == "primary":
                    sec = noise_vec(n_sec)
                else:
                    sec = noise_vec(n_sec + 1)
                    pos = int(rng.integers(n_sec + 1))
                    sec[pos] = protos[lab] + rng.standard_normal(D) * config.noise_sigma
                frames.append(FrameSample(primary.astype(np.float32), sec.astype(np.float32), lab))
            shots.append(Shot(lab, frames))
        subject = f"s{k % config.num_subjects}"
        sequences.append(Sequence(f"seq{k:03d}", subject, shots))
    ds = Dataset(make_actions(A), sequences, D)
    ds.validate()
    return ds


def synth_prototypes(config: SynthConfig) -> np.ndarray:
    """The prototype matrix ``synth_generate`` uses for ``config``."""
    config.validate()
    return make_prototypes(config.num_actions, config.feature_dim, np.random.default_rng(config.seed))


# ---------------------------------------------------------------------------
# Per-frame probability sequences (the input of the recurrent model)


@dataclass
class ProbSequence:
    """Per-frame action probabilities for one sequence with shot structure."""

    id: str
    probs: np.ndarray  # (N, A), rows on the simplex
    shot_lengths: list[int]
    shot_labels: list[int]
    subject: str = ""

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if sum(self.shot_lengths) != self.probs.shape[0]:
            raise DatasetError(f"{self.id}: shot lengths sum to {sum(self.shot_lengths)}, "
                               f"but {self.probs.shape[0]} frames given")
        if len(self.shot_labels) != len(self.shot_lengths):
            raise DatasetError(f"{self.id}: one label per shot required")
        if not self.shot_lengths or min(self.shot_lengths) < 1:
            raise DatasetError(f"{self.id}: shots must be non-empty")

    @property
    def frame_labels(self) -> np.ndarray:
        return np.repeat(self.shot_labels, self.shot_lengths)

    @property
    def shot_ends(self) -> np.ndarray:
        return np.cumsum(self.shot_lengths) - 1

    def shot_slices(self) -> list[slice]:
        ends = np.cumsum(self.shot_lengths)
        return [slice(int(e - n), int(e)) for e, n in zip(ends, self.shot_lengths)]


@dataclass
class MarkovProbConfig:
    """Noisy frame-probability generator with a structured shot-label chain.

    Each sequence follows a cyclic chain over the actions: with probability
    ``stay_prob`` the next shot takes the successor label, otherwise a
    uniformly random one.  Frame logits are ``signal`` on the true class plus
    Gaussian noise of std ``noise``.
    """

    num_actions: int = 6
    num_sequences: int = 60
    shots_per_sequence: tuple[int, int] = (6, 10)
    frames_per_shot: tuple[int, int] = (4, 10)
    stay_prob: float = 0.9
    signal: float = 1.0
    noise: float = 1.0
    num_subjects: int = 4
    seed: int = 0
    transition: np.ndarray | None = field(default=None, repr=False)

    def transitions(self) -> np.ndarray:
        if self.transition is not None:
            return np.asarray(self.transition, dtype=float)
        A = self.num_actions
        T = np.full((A, A), (1.0 - self.stay_prob) / A)
        for a in range(A):
            T[a, (a + 1) % A] += self.stay_prob
        return T


def synth_prob_sequences(config: MarkovProbConfig) -> list[ProbSequence]:
    rng = np.random.default_rng(config.seed)
    A = config.num_actions
    T = config.transitions()
    out = []
    for k in range(config.num_sequences):
        n_shots = int(rng.integers(config.shots_per_sequence[0], config.shots_per_sequence[1] + 1))
        labels = markov_chain(T, n_shots, rng)
        lengths = [int(rng.integers(config.frames_per_shot[0], config.frames_per_shot[1] + 1))
                   for _ in labels]
        y = np.repeat(labels, lengths)
        logits = rng.standard_normal((len(y), A)) * config.noise
        logits[np.arange(len(y)), y] += config.signal
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        out.append(ProbSequence(f"seq{k:03d}", p, lengths, labels, subject=f"s{k % config.num_subjects}"))
    return out


def dumps_prob_sequences(seqs: list[ProbSequence]) -> str:
    lines = []
    for s in seqs:
        rec = {"id": s.id, "subject": s.subject, "probs": s.probs,
               "shot_lengths": list(s.shot_lengths), "shot_labels": list(s.shot_labels)}
        lines.append(_encode(rec))
    return "\n".join(lines) + "\n"


def save_prob_sequences(seqs: list[ProbSequence], path: str | Path) -> None:
    Path(path).write_text(dumps_prob_sequences(seqs), encoding="utf-8")


def load_prob_sequences(path: str | Path) -> list[ProbSequence]:
    out = []
    for i, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not ln.strip():
            continue
        try:
            rec = json.loads(ln)
            out.append(ProbSequence(str(rec["id"]), np.asarray(rec["probs"], dtype=float),
                                    [int(x) for x in rec["shot_lengths"]],
                                    [int(x) for x in rec["shot_labels"]], str(rec.get("subject", ""))))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"line {i}: malformed probability record ({exc})") from exc
    return out
