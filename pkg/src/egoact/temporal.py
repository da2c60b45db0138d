"""Meta-sequence grammar for temporal augmentation of shot orders.

A meta-sequence splits a sequence's shot labels into ordered groups of
related actions.  Groups may be swapped pairwise, skipped, or duplicated
into declared insertion positions.  Operations are applied in a fixed order
(swaps, skips, adds), each one firing independently with its policy
probability, so the distribution over outputs is well defined.
"""

from __future__ import annotations

import itertools
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, DatasetError, Sequence, Shot


@dataclass(frozen=True)
class ActionGroup:
    id: str
    actions: tuple[int, ...]


@dataclass
class MetaSequence:
    groups: list[ActionGroup]
    swappable: list[tuple[str, str]] = field(default_factory=list)
    skippable: list[str] = field(default_factory=list)
    addable: dict[str, list[int]] = field(default_factory=dict)
    sequence_id: str | None = None

    def group(self, gid: str) -> ActionGroup:
        for g in self.groups:
            if g.id == gid:
                return g
        raise KeyError(gid)

    @property
    def labels(self) -> list[int]:
        return [a for g in self.groups for a in g.actions]

    def operations(self) -> list[tuple]:
        """Operations in application order."""
        ops: list[tuple] = [("swap", a, b) for a, b in self.swappable]
        ops += [("skip", g) for g in self.skippable]
        ops += [("add", g, p) for g in self.addable for p in self.addable[g]]
        return ops

    @classmethod
    def from_dict(cls, d: dict) -> "MetaSequence":
        return cls(
            groups=[ActionGroup(str(g["id"]), tuple(int(a) for a in g["actions"])) for g in d["groups"]],
            swappable=[(str(a), str(b)) for a, b in d.get("swappable", [])],
            skippable=[str(g) for g in d.get("skippable", [])],
            addable={str(e["id"]): [int(p) for p in e["positions"]] for e in d.get("addable", [])},
            sequence_id=d.get("sequence_id"),
        )

    def to_dict(self) -> dict:
        return {
            "sequence_id": self.sequence_id,
            "groups": [{"id": g.id, "actions": list(g.actions)} for g in self.groups],
            "swappable": [list(p) for p in self.swappable],
            "skippable": list(self.skippable),
            "addable": [{"id": g, "positions": list(ps)} for g, ps in self.addable.items()],
        }


def load_metas(path: str | Path) -> dict[str, MetaSequence]:
    """Read one meta object, a JSON list of them, or JSON lines; keyed by sequence id."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
        items = data if isinstance(data, list) else [data]
    except json.JSONDecodeError:
        items = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
    out = {}
    for d in items:
        m = MetaSequence.from_dict(d)
        if m.sequence_id is None:
            raise DatasetError("meta-sequence without sequence_id")
        out[m.sequence_id] = m
    return out


@dataclass
class ExpansionPolicy:
    p_swap: float = 0.5
    p_skip: float = 0.5
    p_add: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("p_swap", "p_skip", "p_add"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    def prob(self, op: tuple) -> float:
        return {"swap": self.p_swap, "skip": self.p_skip, "add": self.p_add}[op[0]]


def validate_meta(meta: MetaSequence) -> list[str]:
    """Referential and structural problems; an empty list means valid."""
    problems = []
    ids = [g.id for g in meta.groups]
    known = set(ids)
    if not meta.groups:
        problems.append("meta-sequence has no groups")
    if len(known) != len(ids):
        problems.append("duplicate group ids")
    for g in meta.groups:
        if not g.actions:
            problems.append(f"group {g.id!r} is empty")
    for a, b in meta.swappable:
        missing = [x for x in (a, b) if x not in known]
        if missing:
            problems.append(f"swappable pair ({a!r}, {b!r}) names unknown group(s) {missing}")
        elif a == b:
            problems.append(f"swappable pair ({a!r}, {b!r}) must name two distinct groups")
    for g in meta.skippable:
        if g not in known:
            problems.append(f"skippable group {g!r} is unknown")
    for g, positions in meta.addable.items():
        if g not in known:
            problems.append(f"addable group {g!r} is unknown")
        for p in positions:
            if not 0 <= p <= len(ids):
                problems.append(f"insertion position {p} for {g!r} outside [0, {len(ids)}]")
    if meta.groups and known and known <= set(meta.skippable):
        problems.append("sequence may become empty: every group is skippable")
    return problems


def _check(meta: MetaSequence) -> None:
    problems = validate_meta(meta)
    if problems:
        raise ValueError("invalid meta-sequence: " + "; ".join(problems))


def apply_operations(meta: MetaSequence, fired) -> list[str]:
    """Group order after applying the operations flagged in ``fired``."""
    order = [g.id for g in meta.groups]
    for op, on in zip(meta.operations(), fired):
        if not on:
            continue
        if op[0] == "swap":
            a, b = op[1], op[2]
            if a in order and b in order:
                i, j = order.index(a), order.index(b)
                order[i], order[j] = order[j], order[i]
        elif op[0] == "skip":
            if op[1] in order:
                order.remove(op[1])
        else:
            order.insert(min(op[2], len(order)), op[1])
    return order


def order_to_labels(meta: MetaSequence, order: list[str]) -> tuple[int, ...]:
    return tuple(a for gid in order for a in meta.group(gid).actions)


def expand_with_trace(meta: MetaSequence, policy: ExpansionPolicy,
                      rng: np.random.Generator | None = None):
    """``(labels, group_order, fired)`` for one random draw."""
    _check(meta)
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    ops = meta.operations()
    u = rng.random(len(ops))
    fired = tuple(bool(x < policy.prob(op)) for x, op in zip(u, ops))
    order = apply_operations(meta, fired)
    return order_to_labels(meta, order), order, fired


def expand(meta: MetaSequence, policy: ExpansionPolicy, rng: np.random.Generator | None = None) -> list[int]:
    return list(expand_with_trace(meta, policy, rng)[0])


def enumerate_all(meta: MetaSequence, limit: int | None = None) -> tuple[set[tuple[int, ...]], bool]:
    """All label sequences reachable by any subset of operations.

    Returns ``(sequences, overflow)``; ``overflow`` is set when enumeration
    stopped at ``limit`` distinct sequences.
    """
    _check(meta)
    out: set[tuple[int, ...]] = set()
    for fired in itertools.product((False, True), repeat=len(meta.operations())):
        out.add(order_to_labels(meta, apply_operations(meta, fired)))
        if limit is not None and len(out) >= limit:
            return out, True
    return out, False


def output_distribution(meta: MetaSequence, policy: ExpansionPolicy) -> dict[tuple[int, ...], float]:
    """Exact probability of each output under ``policy`` by subset enumeration."""
    _check(meta)
    ops = meta.operations()
    dist: dict[tuple[int, ...], float] = {}
    for fired in itertools.product((False, True), repeat=len(ops)):
        p = 1.0
        for op, on in zip(ops, fired):
            q = policy.prob(op)
            p *= q if on else 1.0 - q
        key = order_to_labels(meta, apply_operations(meta, fired))
        dist[key] = dist.get(key, 0.0) + p
    return dist


def sequence_rng(seed: int, sequence_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(sequence_id.encode())])


def augment_dataset(dataset: Dataset, metas: dict[str, MetaSequence], policy: ExpansionPolicy) -> Dataset:
    """Re-order each sequence's shots by one expansion draw of its meta-sequence.

    Shots move as intact blocks; an added group duplicates the shots of that
    group.  Sequences without a meta are copied unchanged.
    """
    out = []
    for seq in dataset.sequences:
        meta = metas.get(seq.id)
        if meta is None:
            out.append(seq)
            continue
        if meta.labels != seq.shot_labels:
            raise DatasetError(f"meta for {seq.id!r} covers labels {meta.labels}, "
                               f"sequence has {seq.shot_labels}")
        blocks, k = {}, 0
        for g in meta.groups:
            blocks[g.id] = seq.shots[k:k + len(g.actions)]
            k += len(g.actions)
        _, order, fired = expand_with_trace(meta, policy, sequence_rng(policy.seed, seq.id))
        shots = [Shot(s.label, list(s.frames)) for gid in order for s in blocks[gid]]
        ops = [list(map(str, op)) for op, on in zip(meta.operations(), fired) if on]
        prov = {"source": seq.id, "group_order": order, "operations": ops}
        out.append(Sequence(seq.id, seq.subject, shots, seq.activity, prov))
    return Dataset(dataset.actions, out, dataset.feature_dim)
