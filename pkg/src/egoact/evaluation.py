"""Accuracy metrics, confusion matrices and sequence-similarity analysis."""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import ActionLabel
from .hlstm import predict_shot
from .serialize import dumps_csv, dumps_json


def levenshtein(a, b) -> int:
    """Unit-cost insert/delete/substitute edit distance."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def avg_pairwise_levenshtein(sequences, groups=None) -> float:
    """Mean edit distance over unordered pairs of label sequences.

    With ``groups`` (one key per sequence, e.g. the activity), only pairs
    sharing a key are compared.
    """
    seqs = [list(s) for s in sequences]
    if len(seqs) < 2:
        raise ValueError("need at least two sequences")
    pairs = itertools.combinations(range(len(seqs)), 2)
    if groups is not None:
        groups = list(groups)
        pairs = [(i, j) for i, j in pairs if groups[i] == groups[j]]
    d = [levenshtein(seqs[i], seqs[j]) for i, j in pairs]
    if not d:
        raise ValueError("no comparable pairs")
    return float(np.mean(d))


def frame_accuracy(preds: dict, truth: dict) -> tuple[dict[str, float], float]:
    """Per-sequence frame accuracy and its unweighted mean over sequences."""
    if set(preds) != set(truth):
        raise ValueError("prediction and truth cover different sequences")
    per = {}
    for sid in sorted(truth):
        p, t = np.asarray(preds[sid]), np.asarray(truth[sid])
        if p.shape != t.shape:
            raise ValueError(f"{sid}: {p.shape[0]} predictions for {t.shape[0]} frames")
        per[sid] = float(np.mean(p == t)) if t.size else 0.0
    return per, float(np.mean(list(per.values())))


def shot_accuracy(shot_probs, truth, mode: str = "average") -> float:
    """Fraction of shots whose aggregated frame probabilities pick the true label."""
    shot_probs = list(shot_probs)
    if not shot_probs or len(shot_probs) != len(truth):
        raise ValueError("need one non-empty frame-probability block per shot label")
    hits = [predict_shot(P, mode)[0] == int(y) for P, y in zip(shot_probs, truth)]
    return float(np.mean(hits))


def confusion_matrix(preds, truth, num_actions: int) -> np.ndarray:
    C = np.zeros((num_actions, num_actions), dtype=int)
    np.add.at(C, (np.asarray(truth, dtype=int), np.asarray(preds, dtype=int)), 1)
    return C


def verb_object_rates(preds, truth, actions: list[ActionLabel]) -> tuple[float, float]:
    preds, truth = np.asarray(preds, dtype=int), np.asarray(truth, dtype=int)
    verbs = np.array([a.verb for a in actions])
    objs = np.array([a.object for a in actions])
    return float(np.mean(verbs[preds] == verbs[truth])), float(np.mean(objs[preds] == objs[truth]))


@dataclass
class EvalReport:
    per_sequence_frame_acc: dict[str, float]
    mean_frame_acc: float
    shot_acc_avg: float
    shot_acc_weighted: float
    confusion: list[list[int]]
    verb_correct_rate: float
    object_correct_rate: float
    labels: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def build_report(frame_probs: list[np.ndarray], sequences, actions: list[ActionLabel],
                 meta: dict | None = None) -> EvalReport:
    """Full report from per-sequence frame probabilities.

    ``sequences`` must expose ``id``, ``frame_labels``, ``shot_labels`` and
    ``shot_slices()`` (as :class:`egoact.data.ProbSequence` does).
    """
    A = len(actions)
    preds, truth, shot_blocks, shot_truth = {}, {}, [], []
    for P, s in zip(frame_probs, sequences):
        preds[s.id] = np.argmax(P, axis=1)
        truth[s.id] = np.asarray(s.frame_labels)
        shot_blocks += [P[sl] for sl in s.shot_slices()]
        shot_truth += list(s.shot_labels)
    per, mean = frame_accuracy(preds, truth)
    allp = np.concatenate([preds[k] for k in sorted(preds)])
    allt = np.concatenate([truth[k] for k in sorted(truth)])
    vr, orate = verb_object_rates(allp, allt, actions)
    return EvalReport(
        per_sequence_frame_acc=per,
        mean_frame_acc=mean,
        shot_acc_avg=shot_accuracy(shot_blocks, shot_truth, "average"),
        shot_acc_weighted=shot_accuracy(shot_blocks, shot_truth, "linear_weighted"),
        confusion=confusion_matrix(allp, allt, A).tolist(),
        verb_correct_rate=vr,
        object_correct_rate=orate,
        labels=[f"{a.verb} {a.object}" for a in actions],
        meta=dict(meta or {}),
    )


def confusion_csv_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_confusion.csv")


def emit_report(report: EvalReport, path: str | Path, fmt: str = "json") -> None:
    """Write ``report``.  CSV writes metrics to ``path`` and the confusion grid
    to ``<stem>_confusion.csv`` beside it."""
    path = Path(path)
    if fmt == "json":
        path.write_text(dumps_json(report.to_dict()), encoding="utf-8")
        return
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    rows = [("mean_frame_acc", report.mean_frame_acc), ("shot_acc_avg", report.shot_acc_avg),
            ("shot_acc_weighted", report.shot_acc_weighted),
            ("verb_correct_rate", report.verb_correct_rate),
            ("object_correct_rate", report.object_correct_rate)]
    rows += [(f"frame_acc[{sid}]", v) for sid, v in sorted(report.per_sequence_frame_acc.items())]
    path.write_text(dumps_csv(["metric", "value"], rows), encoding="utf-8")
    labels = report.labels or [str(i) for i in range(len(report.confusion))]
    grid = [[lab] + list(row) for lab, row in zip(labels, report.confusion)]
    confusion_csv_path(path).write_text(dumps_csv(["truth\\pred"] + labels, grid), encoding="utf-8")


def load_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))
