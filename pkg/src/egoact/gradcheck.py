"""Central finite-difference checks of the analytic gradients.

Relative error per coordinate is ``|fd - an| / max(|fd|, |an|, floor)``; the
floor keeps coordinates whose true gradient is ~0 from turning round-off
into a large ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FrameSample, ProbSequence
from .hlstm import HlstmParams, backward, forward, make_batch, trace_losses
from .lstm import GATES
from .scorer import ScorerParams, loss_and_grad

STEP = 1e-5
FLOOR = 1e-5
TOL = 1e-4


def rel_error(fd: float, an: float, floor: float = FLOOR) -> float:
    return abs(fd - an) / max(abs(fd), abs(an), floor)


@dataclass
class BlockStat:
    max_rel: float = 0.0
    where: tuple = ()


@dataclass
class GradcheckReport:
    blocks: dict[str, BlockStat] = field(default_factory=dict)
    instances: int = 0
    tol: float = TOL

    def update(self, block: str, err: float, where: tuple) -> None:
        st = self.blocks.setdefault(block, BlockStat())
        if err > st.max_rel:
            st.max_rel, st.where = err, where

    @property
    def worst(self) -> tuple[str, BlockStat]:
        return max(self.blocks.items(), key=lambda kv: kv[1].max_rel)

    @property
    def passed(self) -> bool:
        return all(st.max_rel < self.tol for st in self.blocks.values())

    def lines(self) -> list[str]:
        out = [f"{name:16s} max_rel={st.max_rel:.3e} {'ok' if st.max_rel < self.tol else 'FAIL'}"
               for name, st in sorted(self.blocks.items())]
        name, st = self.worst
        out.append(f"worst: {name} at {st.where} rel={st.max_rel:.3e}")
        return out


def _fd(loss_fn, arr: np.ndarray, idx) -> float:
    old = arr[idx]
    arr[idx] = old + STEP
    lp = loss_fn()
    arr[idx] = old - STEP
    lm = loss_fn()
    arr[idx] = old
    return (lp - lm) / (2 * STEP)


# ---------------------------------------------------------------------------
# Scorer


def random_scorer_instance(rng: np.random.Generator, min_gap: float = 1e-3):
    """Small random scorer problem whose latent argmaxes have a clear margin."""
    while True:
        A, D = int(rng.integers(2, 5)), int(rng.integers(2, 6))
        params = ScorerParams(rng.standard_normal((A, D)), rng.standard_normal((A, D)),
                              rng.standard_normal(A))
        batch = []
        for _ in range(int(rng.integers(1, 4))):
            n = int(rng.integers(1, 5))
            fr = FrameSample(rng.standard_normal(D), rng.standard_normal((n, D)), int(rng.integers(A)))
            batch.append((fr, np.arange(n)))
        ok = True
        for fr, _ in batch:
            S = np.sort(fr.secondaries @ params.W_z.T, axis=0)
            if S.shape[0] > 1 and np.min(S[-1] - S[-2]) < min_gap:
                ok = False
        if ok:
            return params, batch


def check_scorer(params: ScorerParams, batch, report: GradcheckReport, tag=(), fault: str | None = None) -> None:
    _, grads = loss_and_grad(params, batch)
    g = {f"scorer.{k}": v for k, v in grads.named_arrays().items()}
    if fault in g:
        g[fault] = -g[fault]
    loss = lambda: loss_and_grad(params, batch)[0]  # noqa: E731
    for name, arr in params.named_arrays().items():
        for idx in np.ndindex(arr.shape):
            key = f"scorer.{name}"
            report.update(key, rel_error(_fd(loss, arr, idx), g[key][idx]), tag + (idx,))
    report.instances += 1


# ---------------------------------------------------------------------------
# Hierarchical model


def random_hlstm_instance(rng: np.random.Generator):
    A, H = int(rng.integers(2, 4)), int(rng.integers(2, 5))
    params = HlstmParams.init(A, H, int(rng.integers(2**31)))
    for arr in params.named_arrays().values():
        arr += rng.normal(0.0, 0.3, arr.shape)
    seqs = []
    for k in range(int(rng.integers(1, 3))):
        m = int(rng.integers(1, 4))
        lengths = [int(rng.integers(1, 4)) for _ in range(m)]
        P = rng.dirichlet(np.ones(A), size=sum(lengths))
        seqs.append(ProbSequence(f"g{k}", P, lengths, [int(x) for x in rng.integers(A, size=m)]))
    return params, seqs


def _blocks(params: HlstmParams):
    """(block name, array view) pairs with LSTM weights split per gate."""
    out = []
    for lvl in ("level1", "level2"):
        layer = getattr(params, lvl)
        for gname in GATES:
            W, b = layer.gate(gname)
            out.append((f"{lvl}.W_{gname}", W))
            out.append((f"{lvl}.b_{gname}", b))
    for head in ("frame_head", "shot_head"):
        hp = getattr(params, head)
        out.append((f"{head}.W", hp.W))
        out.append((f"{head}.b", hp.b))
    return out


def check_hlstm(params: HlstmParams, seqs: list[ProbSequence], beta: float, report: GradcheckReport,
                tag=(), fault: str | None = None) -> None:
    batch = make_batch(seqs)
    grads = backward(params, forward(params, batch), beta)
    gblocks = dict(_blocks(grads))
    if fault in gblocks:
        gblocks[fault] *= -1.0

    def loss():
        ln, lm = trace_losses(forward(params, batch))
        return float(np.sum((1.0 - beta) * ln + beta * lm))

    for name, arr in _blocks(params):
        for idx in np.ndindex(arr.shape):
            report.update(name, rel_error(_fd(loss, arr, idx), gblocks[name][idx]), tag + (idx,))
    report.instances += 1


def run_suite(n_scorer: int = 100, n_hlstm_per_beta: int = 20, betas=(0.0, 0.5, 1.0), seed: int = 0,
              fault: str | None = None) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    for i in range(n_scorer):
        params, batch = random_scorer_instance(rng)
        check_scorer(params, batch, report, ("scorer", i), fault)
    for beta in betas:
        for i in range(n_hlstm_per_beta):
            params, seqs = random_hlstm_instance(rng)
            check_hlstm(params, seqs, beta, report, ("hlstm", beta, i), fault)
    return report
