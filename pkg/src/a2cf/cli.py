"""Command-line front end: corpus preparation, training, recommendation,
interpretation, evaluation, and synthetic-data generation.

Every command writing results takes --out-dir and uses fixed file names
(corpus.manifest, prepared.npz, model.ckpt, train.log, recs.tsv,
explanations.txt, metrics.txt) so runs are scriptable.
"""

import argparse
import os
import sys

import numpy as np

from . import data, evaluation, ranking, training
from .config import build_run_config, parse_config_file
from .interpret import attribute_advantage, render_interpretation
from .matrices import build_matrices
from .synthetic import SyntheticSpec, generate_synthetic

PREPARED_NAME = "prepared.npz"
MANIFEST_NAME = "corpus.manifest"
CHECKPOINT_NAME = "model.ckpt"
TRAIN_LOG_NAME = "train.log"
RECS_NAME = "recs.tsv"
EXPLAIN_NAME = "explanations.txt"
METRICS_NAME = "metrics.txt"


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int)
    grp = parser.add_argument_group("hyperparameter overrides")
    grp.add_argument("--embed-dim", type=int, dest="embed_dim")
    grp.add_argument("--tower-depth", type=int, dest="tower_depth")
    grp.add_argument("--rating-max", type=float, dest="rating_max")
    grp.add_argument("--subst-weight", type=float, dest="subst_weight")
    grp.add_argument("--subst-temp", type=float, dest="subst_temp")
    grp.add_argument("--pers-temp", type=float, dest="pers_temp")
    grp.add_argument("--learning-rate", type=float, dest="learning_rate")
    grp.add_argument("--batch-size", type=int, dest="batch_size")
    grp.add_argument("--dropout", type=float, dest="dropout")
    grp.add_argument("--negatives", type=int, dest="negatives")
    grp.add_argument("--subst-use-attrs", action=argparse.BooleanOptionalAction,
                     default=None, dest="subst_use_attrs")
    grp.add_argument("--pers-use-attrs", action=argparse.BooleanOptionalAction,
                     default=None, dest="pers_use_attrs")
    grp.add_argument("--rounds-max", type=int, dest="rounds_max")
    grp.add_argument("--phase1-steps", type=int, dest="phase1_steps")
    grp.add_argument("--phase2-steps", type=int, dest="phase2_steps")
    grp.add_argument("--convergence-tol", type=float, dest="convergence_tol")


_CONFIG_KEYS = ("seed", "embed_dim", "tower_depth", "rating_max",
                "subst_weight", "subst_temp", "pers_temp", "learning_rate",
                "batch_size", "dropout", "negatives", "subst_use_attrs",
                "pers_use_attrs", "rounds_max", "phase1_steps",
                "phase2_steps", "convergence_tol")


def _run_config(args):
    file_overrides = parse_config_file(args.config) if args.config else {}
    cli_overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    return build_run_config(file_overrides, cli_overrides)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="a2cf",
        description="attribute-aware substitute recommendation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="key=value config file (seed only)")
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=300)
    p.add_argument("--attributes", type=int, default=30)
    p.add_argument("--clusters", type=int, default=20)
    p.add_argument("--interactions-per-user", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.1)

    p = sub.add_parser("prepare", help="filter a corpus and build splits")
    p.add_argument("--reviews", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--substitutes", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-user-items", type=int, default=5)
    p.add_argument("--min-item-users", type=int, default=5)
    p.add_argument("--min-attr-mentions", type=int, default=2)
    _add_config_flags(p)

    p = sub.add_parser("train", help="train a model on a prepared corpus")
    p.add_argument("--data", required=True, help="prepared.npz from `prepare`")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)

    p = sub.add_parser("recommend", help="rank substitute candidates")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--user", required=True, help="user token")
    p.add_argument("--query", required=True, help="query item token")
    p.add_argument("--top-k", type=int, default=10)

    p = sub.add_parser("explain", help="render attribute-level interpretations")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--top-attrs", "--z", type=int, default=3, dest="top_attrs",
                   help="attributes per rendered interpretation")

    p = sub.add_parser("evaluate", help="run the ranking protocol on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--eval-negatives", type=int, default=1000)
    p.add_argument("--config", help="key=value config file (seed only)")
    p.add_argument("--seed", type=int)
    return parser


def _resolve_token(token: str, tokens: list, kind: str) -> int:
    try:
        return tokens.index(token)
    except ValueError:
        raise ValueError(f"unknown {kind} {token!r}") from None


def _load_model(args):
    corpus, splits = data.load_prepared(args.data)
    params, cfg = training.load_checkpoint(args.checkpoint)
    if (params.user_emb.shape[0] != corpus.n_users
            or params.item_emb.shape[0] != corpus.n_items
            or params.attr_emb.shape[0] != corpus.n_attrs):
        raise ValueError("checkpoint dimensions do not match the prepared corpus")
    user_mat, item_mat, _ = build_matrices(corpus, cfg.rating_max)
    est = ranking.estimate_matrices(user_mat, item_mat, params)
    return corpus, splits, params, cfg, est


def _seed_from(args) -> int:
    overrides = parse_config_file(args.config) if getattr(args, "config", None) else {}
    if args.seed is not None:
        return args.seed
    if "seed" in overrides:
        return overrides["seed"]
    if "A2CF_SEED" in os.environ:
        return int(os.environ["A2CF_SEED"])
    return 42


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(users=args.users, items=args.items,
                         attributes=args.attributes, clusters=args.clusters,
                         interactions_per_user=args.interactions_per_user,
                         noise=args.noise)
    paths = generate_synthetic(spec, _seed_from(args), args.out_dir)
    for name in ("reviews", "lexicon", "substitutes", "planted"):
        print(f"{name}: {paths[name]}")
    return 0


def _cmd_prepare(args) -> int:
    run = _run_config(args)
    reviews = data.load_reviews(args.reviews, int(run.train.rating_max))
    lexicon = data.load_lexicon(args.lexicon)
    substitutes = data.load_substitutes(args.substitutes)
    corpus = data.filter_corpus(reviews, lexicon, substitutes,
                                args.min_user_items, args.min_item_users,
                                args.min_attr_mentions)
    t_seed, s_seed = np.random.SeedSequence(run.seed).spawn(2)
    triplets = data.build_triplets(corpus, np.random.default_rng(t_seed))
    splits = data.split_triplets(triplets, s_seed)
    os.makedirs(args.out_dir, exist_ok=True)
    prepared = os.path.join(args.out_dir, PREPARED_NAME)
    manifest = os.path.join(args.out_dir, MANIFEST_NAME)
    data.save_prepared(prepared, corpus, splits)
    data.write_corpus_manifest(manifest, corpus, splits)
    print(f"prepared corpus: {prepared}")
    print(f"manifest: {manifest}")
    print(f"users={corpus.n_users} items={corpus.n_items} "
          f"attrs={corpus.n_attrs} train={len(splits.train)} "
          f"valid={len(splits.valid)} test={len(splits.test)}")
    return 0


def _cmd_train(args) -> int:
    corpus, splits = data.load_prepared(args.data)
    run = _run_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    result = training.train_pipeline(
        corpus, splits, run,
        log_path=os.path.join(args.out_dir, TRAIN_LOG_NAME),
        diag_dir=args.out_dir)
    ckpt = os.path.join(args.out_dir, CHECKPOINT_NAME)
    training.save_checkpoint(ckpt, result.params, run.train)
    loss = "n/a" if result.final_loss is None else f"{result.final_loss:.6f}"
    print(f"checkpoint: {ckpt}")
    print(f"rounds={result.rounds_run} converged={result.converged} "
          f"mean_pair_loss={loss}")
    return 0


def _cmd_recommend(args) -> int:
    corpus, _, params, cfg, est = _load_model(args)
    user = _resolve_token(args.user, corpus.user_tokens, "user")
    query = _resolve_token(args.query, corpus.item_tokens, "item")
    candidates = np.delete(np.arange(corpus.n_items), query)
    ranked = ranking.recommend_top_k(params, est, cfg, user, query,
                                     candidates, args.top_k)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, RECS_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        for rank, (item, score) in enumerate(zip(ranked.items, ranked.scores),
                                             start=1):
            fh.write(f"{args.user}\t{args.query}\t{rank}\t"
                     f"{corpus.item_tokens[item]}\t{score:.6f}\n")
    print(f"recommendations: {path}")
    return 0


def _cmd_explain(args) -> int:
    corpus, _, params, cfg, est = _load_model(args)
    user = _resolve_token(args.user, corpus.user_tokens, "user")
    query = _resolve_token(args.query, corpus.item_tokens, "item")
    candidates = np.delete(np.arange(corpus.n_items), query)
    ranked = ranking.recommend_top_k(params, est, cfg, user, query,
                                     candidates, args.top_k)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, EXPLAIN_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        for item in ranked.items:
            adv = attribute_advantage(est.user_attr[user], est.item_attr[query],
                                      est.item_attr[item], user=user,
                                      query=query, item=int(item))
            report = render_interpretation(adv, args.top_attrs,
                                           corpus.attr_tokens, args.query,
                                           corpus.item_tokens[item])
            fh.write(f"{args.user}\t{args.query}\t"
                     f"{corpus.item_tokens[item]}\t{report.text}\n")
    print(f"explanations: {path}")
    return 0


def _cmd_evaluate(args) -> int:
    corpus, splits, params, cfg, est = _load_model(args)
    report = evaluation.evaluate_protocol(params, est, cfg, corpus,
                                          splits.test, seed=_seed_from(args),
                                          negatives=args.eval_negatives)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, METRICS_NAME)
    evaluation.write_metrics_report(path, report)
    for name, value in report.metrics.items():
        print(f"{name}={value:.4f}")
    print(f"metrics: {path}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "recommend": _cmd_recommend,
    "explain": _cmd_explain,
    "evaluate": _cmd_evaluate,
}


def cli_dispatch(argv) -> int:
    """Parse argv and run one subcommand; returns the process exit code
    (2 for usage errors, 1 for runtime failures)."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _COMMANDS[args.command](args)
    except BrokenPipeError:
        return 1
    except (OSError, ValueError, RuntimeError, FloatingPointError,
            AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
