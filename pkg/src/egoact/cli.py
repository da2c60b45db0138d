"""Command-line entry point: ``egoact <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 data error, 4 missing prerequisite artifact (e.g. a phase-1 checkpoint).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as D
from . import evaluation as E
from . import geometry as G
from . import hlstm as HL
from . import scorer as SC
from . import temporal as TA
from .gradcheck import run_suite
from .serialize import write_csv, write_json

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DATA, EXIT_MISSING = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _need_seed(args) -> int:
    if args.seed is None:
        raise CliError(EXIT_CONFIG, f"{args.command}: --seed is required")
    return int(args.seed)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(path) -> D.Dataset:
    try:
        return D.load_dataset(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_DATA, f"dataset not found: {path}") from exc
    except D.DatasetError as exc:
        raise CliError(EXIT_DATA, f"{path}: {exc}") from exc


def _load_probs(path) -> list[D.ProbSequence]:
    try:
        return D.load_prob_sequences(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_DATA, f"probability file not found: {path}") from exc
    except D.DatasetError as exc:
        raise CliError(EXIT_DATA, f"{path}: {exc}") from exc


def _load_scorer(path) -> SC.ScorerParams:
    try:
        return SC.load_scorer(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING, f"frame-model checkpoint not found: {path}") from exc
    except (ValueError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, str(exc)) from exc


def _load_hlstm(path) -> tuple[HL.HlstmParams, dict]:
    try:
        return HL.load_hlstm(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING, f"hierarchical checkpoint not found: {path}") from exc
    except (ValueError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, str(exc)) from exc


def dataset_to_probs(params: SC.ScorerParams, ds: D.Dataset) -> list[D.ProbSequence]:
    try:
        outs = SC.predict_dataset(params, ds, use_all_secondaries=True)
    except ValueError as exc:
        raise CliError(EXIT_DATA, str(exc)) from exc
    return [D.ProbSequence(seq.id, np.array([o.probs for o in o_seq]),
                           [len(s.frames) for s in seq.shots], seq.shot_labels, seq.subject)
            for seq, o_seq in zip(ds.sequences, outs)]


def _frame_inputs(args) -> list[D.ProbSequence]:
    if getattr(args, "probs", None):
        return _load_probs(args.probs)
    if getattr(args, "dataset", None) and getattr(args, "frame_ckpt", None):
        return dataset_to_probs(_load_scorer(args.frame_ckpt), _load_dataset(args.dataset))
    raise CliError(EXIT_CONFIG, f"{args.command}: give --probs or --dataset with --frame-ckpt")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    seed = _need_seed(args)
    out = _out(args)
    try:
        if args.kind == "probs":
            cfg = D.MarkovProbConfig(num_actions=args.actions, num_sequences=args.sequences,
                                     shots_per_sequence=tuple(args.shots), frames_per_shot=tuple(args.frames),
                                     stay_prob=args.stay_prob, signal=args.signal, noise=args.noise,
                                     num_subjects=args.subjects, seed=seed)
            D.save_prob_sequences(D.synth_prob_sequences(cfg), out / "probs.jsonl")
            print(f"wrote {out / 'probs.jsonl'}")
            return EXIT_OK
        trans = args.transitions
        if trans != "uniform":
            trans = json.loads(Path(trans).read_text())
        cfg = D.SynthConfig(num_actions=args.actions, feature_dim=args.dim,
                            frames_per_shot=tuple(args.frames), shots_per_sequence=tuple(args.shots),
                            num_sequences=args.sequences, num_subjects=args.subjects,
                            noise_sigma=args.sigma, num_distractor_secondaries=args.distractors,
                            discriminative_placement=args.placement, transition_matrix=trans, seed=seed)
        ds = D.synth_generate(cfg)
    except (D.ConfigError, ValueError, OSError) as exc:
        raise CliError(EXIT_CONFIG, f"synth: {exc}") from exc
    D.save_dataset(ds, out / "dataset.jsonl")
    print(f"wrote {out / 'dataset.jsonl'}: {len(ds.sequences)} sequences, A={ds.num_actions}, D={ds.feature_dim}")
    return EXIT_OK


def _scorer_accuracy(params, ds) -> float:
    outs = SC.predict_dataset(params, ds)
    y = np.array([f.label for f in ds.frames()])
    p = np.array([o.label for seq in outs for o in seq])
    return float(np.mean(y == p))


def cmd_train_frame(args) -> int:
    seed = _need_seed(args)
    if not args.dataset:
        raise CliError(EXIT_CONFIG, "train-frame: --dataset is required")
    ds = _load_dataset(args.dataset)
    cfg = SC.ScorerTrainConfig(learning_rate=args.lr, momentum=args.momentum, decay=args.decay,
                               decay_interval=args.decay_interval, batch_size=args.batch_size,
                               num_sampled_secondaries=args.k, max_iterations=args.iterations, seed=seed,
                               freeze_secondary=args.freeze_secondary)
    try:
        cfg.validate()
    except D.ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"train-frame: {exc}") from exc
    out = _out(args)
    init = SC.init_scorer(ds, cfg)
    SC.save_scorer(init, out / "scorer_init.json", {"seed": seed, "iterations": 0})
    params, hist = SC.train_frame_model(ds, cfg, init=init)
    SC.save_scorer(params, out / "scorer.json", {"seed": seed, "iterations": cfg.max_iterations})
    write_csv(["iteration", "lr", "loss"], hist.rows, out / "scorer_history.csv")
    if args.probs_out:
        D.save_prob_sequences(dataset_to_probs(params, ds), out / "probs.jsonl")
    print(f"train accuracy {_scorer_accuracy(params, ds):.4f} after {cfg.max_iterations} iterations")
    return EXIT_OK


def _hlstm_config(args, seed: int) -> HL.HlstmTrainConfig:
    cfg = HL.HlstmTrainConfig(beta=args.beta, learning_rate=args.lr, momentum=args.momentum,
                              decay=args.decay, decay_interval=args.decay_interval,
                              batch_size=args.batch_size, epochs=args.epochs, hidden_dim=args.hidden,
                              seed=seed, max_norm=args.max_norm)
    try:
        cfg.validate()
    except D.ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"{args.command}: {exc}") from exc
    return cfg


def _write_history(hist: HL.HlstmHistory, path) -> None:
    write_csv(hist.columns, hist.rows, path)


def cmd_train_hlstm(args) -> int:
    seed = _need_seed(args)
    cfg = _hlstm_config(args, seed)
    init = None
    if args.init:
        init, _ = _load_hlstm(args.init)
    elif cfg.beta > 0 and not args.force:
        raise CliError(EXIT_MISSING, "train-hlstm: beta > 0 needs --init <phase-1 checkpoint> (or --force)")
    seqs = _frame_inputs(args)
    val = _load_probs(args.val_probs) if args.val_probs else None
    try:
        params, hist = HL.train_hlstm(seqs, cfg, init=init, force=args.force, val=val)
    except D.ConfigError as exc:
        raise CliError(EXIT_DATA, f"train-hlstm: {exc}") from exc
    out = _out(args)
    phase = 1 if cfg.beta == 0 and init is None else 2
    HL.save_hlstm(params, out / "hlstm.json", {"beta": cfg.beta, "phase": phase, "seed": seed,
                                               "epochs": cfg.epochs})
    _write_history(hist, out / "hlstm_history.csv")
    last = hist.rows[-1] if hist.rows else None
    if last:
        print(f"beta={cfg.beta} epoch {last[0]}: L={last[4]:.4f} frame_acc={last[5]:.4f} shot_acc={last[6]:.4f}")
    return EXIT_OK


def _split_val(seqs: list[D.ProbSequence], every: int = 4):
    val = [s for i, s in enumerate(seqs) if i % every == every - 1]
    train = [s for i, s in enumerate(seqs) if i % every != every - 1]
    return train, val


def cmd_grid_beta(args) -> int:
    seed = _need_seed(args)
    if not args.init:
        raise CliError(EXIT_MISSING, "grid-beta: --init <phase-1 checkpoint> is required")
    init, _ = _load_hlstm(args.init)
    args.beta = float(args.betas[0]) if args.betas else 0.5
    cfg = _hlstm_config(args, seed)
    seqs = _frame_inputs(args)
    if args.val_probs:
        train, val = seqs, _load_probs(args.val_probs)
    else:
        train, val = _split_val(seqs)
    if not args.betas:
        raise CliError(EXIT_CONFIG, "grid-beta: empty beta grid")
    res = HL.beta_grid_search(train, val, cfg, init, betas=[float(b) for b in args.betas])
    out = _out(args)
    cols = ["beta", "train_frame_acc", "val_frame_acc", "train_shot_acc", "val_shot_acc", "val_L"]
    write_csv(cols, [[r[c] for c in cols] for r in res.rows], out / "grid.csv")
    HL.save_hlstm(res.best_params, out / "hlstm_best.json",
                  {"beta": res.best_beta, "phase": 2, "seed": seed, "epochs": cfg.epochs})
    for r in res.rows:
        print(f"beta={r['beta']:.2f} train={r['train_frame_acc']:.4f} val={r['val_frame_acc']:.4f}")
    print(f"best beta {res.best_beta}")
    return EXIT_OK


def _print_report(name: str, rep: E.EvalReport) -> None:
    print(f"{name:14s} frame={rep.mean_frame_acc:.4f} shot_avg={rep.shot_acc_avg:.4f} "
          f"shot_weighted={rep.shot_acc_weighted:.4f} verb={rep.verb_correct_rate:.4f} "
          f"object={rep.object_correct_rate:.4f}")


def cmd_eval(args) -> int:
    out = _out(args)
    actions = None
    if args.dataset:
        ds = _load_dataset(args.dataset)
        actions = ds.actions
    if args.frame_ckpt and args.dataset:
        seqs = dataset_to_probs(_load_scorer(args.frame_ckpt), ds)
    elif args.probs:
        seqs = _load_probs(args.probs)
    else:
        raise CliError(EXIT_CONFIG, "eval: give --dataset with --frame-ckpt, or --probs")
    if not seqs:
        raise CliError(EXIT_DATA, "eval: no sequences")
    A = seqs[0].probs.shape[1]
    if actions is None:
        actions = D.make_actions(A)
    if len(actions) != A:
        raise CliError(EXIT_DATA, f"eval: model emits {A} classes, dataset has {len(actions)} actions")
    reports = {"frame": E.build_report([s.probs for s in seqs], seqs, actions, {"model": "frame"})}
    if args.hlstm_ckpt:
        params, _ = _load_hlstm(args.hlstm_ckpt)
        if params.num_actions != A:
            raise CliError(EXIT_DATA, "eval: checkpoint and data disagree on the number of actions")
        for state in ("carry", "reset"):
            P = HL.predict_frames(params, seqs, state=state)
            reports[f"hlstm_{state}"] = E.build_report(P, seqs, actions, {"model": "hlstm", "state": state})
    for name, rep in reports.items():
        E.emit_report(rep, out / f"report_{name}.json", "json")
        E.emit_report(rep, out / f"report_{name}.csv", "csv")
        _print_report(name, rep)
    return EXIT_OK


def _parse_terms(text: str) -> list[tuple[float, float]]:
    terms = []
    for part in text.split(","):
        lam, gam = part.split(":")
        terms.append((float(lam), float(gam)))
    return terms


def cmd_augment(args) -> int:
    seed = _need_seed(args)
    out = _out(args)
    if args.kind == "geom":
        try:
            theta_max = math.radians(args.theta_max) if args.degrees else args.theta_max
            terms = _parse_terms(args.terms)
            rng = np.random.default_rng(seed)
            # zero amplitude means no rotation; schedules themselves need a positive bound
            sched = G.RotationSchedule.random(args.frames, theta_max or math.pi / 4, rng, C=args.C, terms=terms)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, f"augment geom: {exc}") from exc
        prims = None
        if args.primaries:
            try:
                prims = [G.Rect.from_dict(r) for r in json.loads(Path(args.primaries).read_text())]
            except (OSError, KeyError, ValueError, TypeError) as exc:
                raise CliError(EXIT_DATA, f"augment geom: bad primaries file ({exc})") from exc
            if len(prims) != args.frames:
                raise CliError(EXIT_DATA, f"augment geom: {len(prims)} boxes for {args.frames} frames")
        if theta_max == 0:
            res = G.augment_angles((args.width, args.height), np.zeros(args.frames), prims)
        else:
            res = G.augment_video((args.width, args.height), sched, prims)
        write_json({"schedule": {"C": sched.C, "theta_max": theta_max, "terms": sched.terms,
                                 "r": sched.r, "num_frames": sched.num_frames},
                    "frames": res.records()}, out / "geom.json")
        print(f"wrote {out / 'geom.json'}")
        return EXIT_OK
    if not args.dataset or not args.metas:
        raise CliError(EXIT_CONFIG, "augment temporal: --dataset and --metas are required")
    ds = _load_dataset(args.dataset)
    try:
        metas = TA.load_metas(args.metas)
        policy = TA.ExpansionPolicy(args.p_swap, args.p_skip, args.p_add, seed)
    except FileNotFoundError as exc:
        raise CliError(EXIT_DATA, f"augment temporal: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"augment temporal: {exc}") from exc
    for sid, m in metas.items():
        problems = TA.validate_meta(m)
        if problems:
            raise CliError(EXIT_DATA, f"augment temporal: meta {sid!r}: {'; '.join(problems)}")
    try:
        aug = TA.augment_dataset(ds, metas, policy)
    except D.DatasetError as exc:
        raise CliError(EXIT_DATA, f"augment temporal: {exc}") from exc
    D.save_dataset(aug, out / "augmented.jsonl")
    print(f"wrote {out / 'augmented.jsonl'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else int(args.seed)
    rep = run_suite(args.scorer_instances, args.hlstm_instances, seed=seed, fault=args.inject_fault)
    for line in rep.lines():
        print(line)
    if args.out:
        out = _out(args)
        write_json({"instances": rep.instances, "tol": rep.tol, "passed": rep.passed,
                    "blocks": {k: {"max_rel": v.max_rel, "where": [str(x) for x in v.where]}
                               for k, v in sorted(rep.blocks.items())}}, out / "gradcheck.json")
    print(f"{rep.instances} instances: {'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_levenshtein(args) -> int:
    if args.seqs:
        if args.chars:
            seqs = [list(s) for s in args.seqs]
        else:
            seqs = [[x.strip() for x in s.split(",") if x.strip()] for s in args.seqs]
        groups = None
    elif args.dataset:
        ds = _load_dataset(args.dataset)
        seqs = [s.shot_labels for s in ds.sequences]
        groups = [s.activity or s.id for s in ds.sequences] if args.within_activity else None
    elif args.probs:
        ps = _load_probs(args.probs)
        seqs = [s.shot_labels for s in ps]
        groups = None
    else:
        raise CliError(EXIT_CONFIG, "levenshtein: give --seqs, --dataset or --probs")
    try:
        if len(seqs) == 2 and groups is None:
            value = float(E.levenshtein(*seqs))
        else:
            value = E.avg_pairwise_levenshtein(seqs, groups)
    except ValueError as exc:
        raise CliError(EXIT_DATA, f"levenshtein: {exc}") from exc
    print(f"{value:g}")
    if args.out:
        write_json({"avg_levenshtein": value, "num_sequences": len(seqs)}, _out(args) / "levenshtein.json")
    return EXIT_OK


def cmd_primary_region(args) -> int:
    if args.width is None or args.height is None:
        raise CliError(EXIT_CONFIG, "primary-region: --width and --height are required")
    try:
        mask = G.read_pbm(args.mask) if args.mask else None
        wrists = G.read_points(args.wrists) if args.wrists else []
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_DATA, f"primary-region: {exc}") from exc
    if mask is not None and (mask.width, mask.height) != (args.width, args.height):
        raise CliError(EXIT_DATA, "primary-region: mask size differs from frame size")
    fixed = tuple(args.fixed_box) if args.fixed_box else None
    try:
        rect = G.primary_region(mask, wrists, (args.width, args.height), fixed)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"primary-region: {exc}") from exc
    print(json.dumps(rect.to_dict(), sort_keys=True))
    if args.out:
        write_json(rect.to_dict(), _out(args) / "primary_region.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON file of flag values (command-line flags win)")
    p.add_argument("--out", required=False, default=None if not out_required else ".",
                   help="output directory")
    p.add_argument("--threads", type=int, default=1, help="accepted for pipeline compatibility; "
                   "computation is single-threaded so results never depend on it")


def _optim_flags(p, lr: float, epochs: int) -> None:
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--decay", type=float, default=0.1)
    p.add_argument("--decay-interval", type=int, default=30000)
    p.add_argument("--batch-size", type=int, default=6)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--max-norm", type=float, default=5.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="egoact", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--kind", choices=["features", "probs"], default="features")
    p.add_argument("--actions", type=int, default=4)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--sequences", type=int, default=8)
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--frames", type=int, nargs=2, default=[3, 6], metavar=("LO", "HI"))
    p.add_argument("--shots", type=int, nargs=2, default=[3, 6], metavar=("LO", "HI"))
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--distractors", type=int, default=3)
    p.add_argument("--placement", choices=["primary", "secondary_only", "both"], default="primary")
    p.add_argument("--transitions", default="uniform", help="'uniform' or a JSON file with an AxA matrix")
    p.add_argument("--stay-prob", type=float, default=0.9)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-frame", help="train the latent-region frame scorer")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--decay", type=float, default=0.1)
    p.add_argument("--decay-interval", type=int, default=30000)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--k", type=int, default=10, help="secondary regions sampled per frame")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--freeze-secondary", action="store_true", help="primary-only ablation")
    p.add_argument("--probs-out", action="store_true", help="also write per-frame probabilities")
    p.set_defaults(func=cmd_train_frame)

    p = sub.add_parser("train-hlstm", help="train the hierarchical recurrent model")
    _common(p)
    p.add_argument("--probs")
    p.add_argument("--dataset")
    p.add_argument("--frame-ckpt")
    p.add_argument("--val-probs")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--init")
    p.add_argument("--force", action="store_true")
    _optim_flags(p, 0.02, 20)
    p.set_defaults(func=cmd_train_hlstm)

    p = sub.add_parser("grid-beta", help="phase-2 grid search over beta")
    _common(p)
    p.add_argument("--probs")
    p.add_argument("--dataset")
    p.add_argument("--frame-ckpt")
    p.add_argument("--val-probs")
    p.add_argument("--init")
    p.add_argument("--betas", type=float, nargs="*", default=[0.5, 0.6, 0.7, 0.8, 0.9])
    _optim_flags(p, 0.02 / 3, 8)
    p.set_defaults(func=cmd_grid_beta)

    p = sub.add_parser("eval", help="evaluate frame and shot accuracy")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--frame-ckpt")
    p.add_argument("--probs")
    p.add_argument("--hlstm-ckpt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="visual (geom) or temporal augmentation")
    _common(p)
    p.add_argument("kind", choices=["geom", "temporal"])
    p.add_argument("--width", type=float, default=640.0)
    p.add_argument("--height", type=float, default=480.0)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--theta-max", type=float, default=10.0)
    p.add_argument("--degrees", action="store_true", help="interpret --theta-max in degrees")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--terms", default="1:1", help="comma list of lambda:gamma pairs")
    p.add_argument("--primaries", help="JSON list of per-frame primary boxes")
    p.add_argument("--dataset")
    p.add_argument("--metas")
    p.add_argument("--p-swap", type=float, default=0.5)
    p.add_argument("--p-skip", type=float, default=0.5)
    p.add_argument("--p-add", type=float, default=0.5)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _common(p, out_required=False)
    p.add_argument("--scorer-instances", type=int, default=100)
    p.add_argument("--hlstm-instances", type=int, default=20, help="per beta in {0, 0.5, 1}")
    p.add_argument("--inject-fault", default=None, help="negate one gradient block, e.g. level1.W_f")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("levenshtein", help="edit distance between shot-label sequences")
    _common(p, out_required=False)
    p.add_argument("--seqs", nargs="+", help="comma-separated label sequences")
    p.add_argument("--chars", action="store_true", help="treat each --seqs value as a character string")
    p.add_argument("--dataset")
    p.add_argument("--probs")
    p.add_argument("--within-activity", action="store_true")
    p.set_defaults(func=cmd_levenshtein)

    p = sub.add_parser("primary-region", help="primary region from skin mask and wrists")
    _common(p, out_required=False)
    p.add_argument("--width", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--mask", help="PBM skin mask")
    p.add_argument("--wrists", help="JSON list of {x, y}")
    p.add_argument("--fixed-box", type=float, nargs=2, metavar=("W", "H"))
    p.set_defaults(func=cmd_primary_region)
    return ap


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_CONFIG, f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError(EXIT_CONFIG, "config must be a JSON object")
    # re-parse with no flags to recover the defaults
    stub = [args.command] + ([args.kind] if args.command == "augment" else [])
    defaults = vars(parser.parse_args(stub))
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in vars(args):
            raise CliError(EXIT_CONFIG, f"unknown config key {key!r} for {args.command}")
        if getattr(args, dest) == defaults.get(dest):
            setattr(args, dest, value)
    return args


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
