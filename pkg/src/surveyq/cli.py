"""Command-line driver: data preparation, synthetic generation, both trainers,
evaluation tables, oracle checks, a terminal survey mode, the HTTP service,
and training-curve extraction.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .dataprep import (
    Dataset,
    load_csv,
    load_schema,
    load_synth_spec,
    rank_features,
    save_csv,
    save_schema,
    save_synth_spec,
    split,
    synth_generate,
)
from .dqn import DqnConfig, TrainingLog, train_dqn
from .environment import EnvConfig
from .errors import DataError, DivergenceError, SurveyQError
from .evaluation import evaluate, results_table, results_tsv
from .modelio import ModelBundle, load_model, save_model
from .oracle import format_policy_tree, optimal_value, policy_value
from .sl import SlConfig, sl_env_config, train_sl

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3

META_FILE = "meta.json"
TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"
SCHEMA_FILE = "schema.json"
SPEC_FILE = "synth_spec.json"


class UsageError(SurveyQError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _config_overlay(args, config_keys):
    """Flag values override config-file values override defaults.

    Flags with a None default carry a sentinel so only explicitly passed ones
    override the file.
    """
    file_values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        try:
            file_values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataError(f"config file {path} is not valid JSON: {e}") from e
    merged = {}
    for key, default in config_keys.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in file_values:
            merged[key] = file_values[key]
        else:
            merged[key] = default
    return merged


def _write_dataset_dir(out: Path, train: Dataset, test: Dataset,
                       rank_report, seed: int, test_frac: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_csv(train, out / TRAIN_FILE)
    save_csv(test, out / TEST_FILE)
    save_schema(train.schema, out / SCHEMA_FILE)
    meta = {
        "feature_order": list(train.feature_order),
        "rank_report": [
            {"index": r.index, "name": r.name, "statistic": r.statistic,
             "dof": r.dof, "p_value": r.p_value}
            for r in rank_report
        ],
        "dropped": train.dropped,
        "seed": seed,
        "test_fraction": test_frac,
        "n_train": len(train.records),
        "n_test": len(test.records),
    }
    (out / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_data_dir(path: str | Path) -> tuple[Dataset, Dataset, dict]:
    """Read a prepared data directory (train.csv, test.csv, schema.json,
    meta.json) back into ranked datasets."""
    path = Path(path)
    for required in (TRAIN_FILE, TEST_FILE, SCHEMA_FILE, META_FILE):
        if not (path / required).exists():
            raise DataError(f"data directory {path} is missing {required}")
    schema = load_schema(path / SCHEMA_FILE)
    meta = json.loads((path / META_FILE).read_text(encoding="utf-8"))
    order = tuple(meta["feature_order"])
    train = load_csv(path / TRAIN_FILE, schema)
    test = load_csv(path / TEST_FILE, schema)
    return replace(train, feature_order=order), replace(test, feature_order=order), meta


def _print_rank_report(report, schema) -> None:
    width = max(22, max(len(r.name) for r in report) + 2)
    print(f"Question  {'Variable Name':<{width}} Num Categories  Chi2        p-value")
    for pos, r in enumerate(report, start=1):
        cats = schema[r.index].num_categories
        print(f"{pos:<9} {r.name:<{width}} {cats:<15} {r.statistic:<11.4f} "
              f"{r.p_value:.3e}")


def _rl_env_config(kmax: int, feature_order, overrides: dict) -> EnvConfig:
    return EnvConfig(kmax=kmax, allowed_features=tuple(feature_order[:kmax]),
                     **overrides)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_prepare(args) -> int:
    schema = load_schema(args.schema)
    dataset = load_csv(args.csv, schema)
    if dataset.dropped:
        print(f"dropped {dataset.dropped} invalid row(s)", file=sys.stderr)
    dataset, report = rank_features(dataset)
    _print_rank_report(report, dataset.schema)
    train, test = split(dataset, args.test_frac, seed=args.seed)
    _write_dataset_dir(Path(args.out), train, test, report, args.seed, args.test_frac)
    print(f"wrote {len(train.records)} train / {len(test.records)} test records "
          f"to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = load_synth_spec(args.spec)
    dataset = synth_generate(spec, args.n, seed=args.seed)
    dataset, report = rank_features(dataset)
    _print_rank_report(report, dataset.schema)
    train, test = split(dataset, args.test_frac, seed=args.seed)
    out = Path(args.out)
    _write_dataset_dir(out, train, test, report, args.seed, args.test_frac)
    save_synth_spec(spec, out / SPEC_FILE)
    print(f"wrote {len(train.records)} train / {len(test.records)} test records "
          f"to {args.out}")
    return EXIT_OK


_RL_KEYS = dict(steps=100_000, minibatch=32, lr_start=0.00025, lr_end=0.00005,
                eps_start=1.0, eps_end=0.01, eps_horizon=50_000,
                buffer_capacity=5000, target_sync_every=500, learn_start=1000,
                eval_every=1000, eval_episodes=100)


def cmd_train_rl(args) -> int:
    train, _, _ = load_data_dir(args.data)
    if args.kmax < 2 or args.kmax > train.num_features:
        raise UsageError(
            f"--kmax must be in [2, {train.num_features}], got {args.kmax}"
        )
    hp = _config_overlay(args, _RL_KEYS)
    config = DqnConfig(
        total_steps=hp["steps"], minibatch=hp["minibatch"],
        lr_start=hp["lr_start"], lr_end=hp["lr_end"],
        eps_start=hp["eps_start"], eps_end=hp["eps_end"],
        eps_horizon=min(hp["eps_horizon"], hp["steps"]),
        buffer_capacity=hp["buffer_capacity"],
        target_sync_every=hp["target_sync_every"],
        learn_start=hp["learn_start"], mask_valid=args.mask,
        eval_every=hp["eval_every"], eval_episodes=hp["eval_episodes"],
        seed=args.seed,
    )
    env = _rl_env_config(args.kmax, train.feature_order, {})
    net, log = train_dqn(config, env, train)
    bundle = ModelBundle(kind="rl", net=net, env=env, schema=train.schema,
                         feature_order=train.feature_order)
    save_model(bundle, args.out)
    log.save(str(args.out) + ".log")
    evals = [r.eval_return for r in log.rows if r.eval_return is not None]
    tail = f", final eval return {evals[-1]:+.3f}" if evals else ""
    print(f"trained RL model (kmax={args.kmax}, {config.total_steps} steps{tail}) "
          f"-> {args.out}")
    return EXIT_OK


_SL_KEYS = dict(epochs=20, minibatch=32, lr_start=0.0025, lr_end=0.0005)


def cmd_train_sl(args) -> int:
    train, _, _ = load_data_dir(args.data)
    hp = _config_overlay(args, _SL_KEYS)
    config = SlConfig(k=args.k, epochs=hp["epochs"], minibatch=hp["minibatch"],
                      lr_start=hp["lr_start"], lr_end=hp["lr_end"], seed=args.seed)
    net, log = train_sl(config, train)
    env = sl_env_config(args.k, train.feature_order)
    bundle = ModelBundle(kind="sl", net=net, env=env, schema=train.schema,
                         feature_order=train.feature_order)
    save_model(bundle, args.out)
    log.save(str(args.out) + ".log")
    print(f"trained SL model (k={args.k}, {config.epochs} epochs) -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _, test, _ = load_data_dir(args.data)
    model_paths = [p for p in args.models.split(",") if p]
    if not model_paths:
        raise UsageError("--models needs at least one model file")
    rows = []
    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        for model_path in model_paths:
            bundle = load_model(model_path)
            name = Path(model_path).stem
            metrics = evaluate(bundle.policy(masked=True), test, bundle.env,
                               n_episodes=args.episodes, seed=args.seed,
                               trace=trace_fh)
            rows.append((name, metrics))
    finally:
        if trace_fh:
            trace_fh.close()
    print(results_table(rows))
    if args.tsv:
        Path(args.tsv).write_text(results_tsv(rows), encoding="utf-8")
    return EXIT_OK


def cmd_oracle(args) -> int:
    spec = load_synth_spec(args.spec)
    if args.check:
        bundle = load_model(args.check)
        env = bundle.env
    else:
        if args.kmax < 2 or args.kmax > len(spec.features):
            raise UsageError(
                f"--kmax must be in [2, {len(spec.features)}], got {args.kmax}"
            )
        # synthetic spec files list features in rank order
        env = EnvConfig(kmax=args.kmax,
                        allowed_features=tuple(range(args.kmax)),
                        cost_query=-args.cost, min_queries=args.min_queries)
    value, table = optimal_value(spec, env)
    print(f"optimal expected return: {value:.6f}")
    print(format_policy_tree(spec, env, table))
    if args.check:
        model_value = policy_value(bundle.policy(masked=True), spec, env)
        print(f"model expected return:   {model_value:.6f}")
        print(f"gap to optimal:          {value - model_value:.6f}")
    return EXIT_OK


def cmd_survey(args) -> int:
    bundle = load_model(args.model)
    answered: dict[int, int] = {}
    queries = 0
    policy = bundle.policy(masked=True)
    print(f"survey with model {Path(args.model).stem!r} "
          f"(up to {bundle.env.kmax} questions)")
    while True:
        action = policy.act(answered, queries)
        if action.kind == "predict":
            label = bundle.class_labels[action.index]
            print(f"\nprediction after {queries} question(s): {label}")
            return EXIT_OK
        feature = bundle.env.allowed_features[action.index]
        schema = bundle.schema[feature]
        print(f"\n{schema.prompt}")
        for i, choice in enumerate(schema.choice_labels):
            print(f"  [{i}] {choice}")
        while True:
            raw = input("> ").strip()
            if raw.lower() in ("q", "quit"):
                print("aborted")
                return EXIT_OK
            try:
                choice = int(raw)
            except ValueError:
                print(f"enter a number 0..{schema.num_categories - 1}")
                continue
            if 0 <= choice < schema.num_categories:
                break
            print(f"enter a number 0..{schema.num_categories - 1}")
        answered[feature] = choice
        queries += 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_model_dir

    settings = _config_overlay(args, dict(
        listen="127.0.0.1:8000", models=None, ttl=1800, ui=None,
    ))
    if not settings["models"]:
        raise UsageError("--models directory is required")
    models = load_model_dir(settings["models"])
    if not models:
        raise DataError(f"no *.sqm models found in {settings['models']}")
    host, _, port = settings["listen"].rpartition(":")
    app = create_app(models, ttl_seconds=settings["ttl"], ui_dir=settings["ui"])
    print(f"serving {len(models)} model(s) on {settings['listen']}")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return EXIT_OK


def cmd_curves(args) -> int:
    if not Path(args.log).exists():
        raise DataError(f"training log not found: {args.log}")
    try:
        log = TrainingLog.load(args.log)
    except ValueError as e:
        raise DataError(str(e)) from e
    window: list[float] = []
    print("step\ttrain_return\teval_return")
    for row in log.rows:
        if row.episode_return is not None:
            window.append(row.episode_return)
            if len(window) > args.window:
                window.pop(0)
        if row.eval_return is not None:
            train_avg = sum(window) / len(window) if window else float("nan")
            print(f"{row.step}\t{train_avg!r}\t{row.eval_return!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="surveyq",
                     description="adaptive questionnaire agent toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest a CSV, rank features, split")
    p.add_argument("--csv", required=True, help="input CSV (feature columns + label)")
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument("--out", required=True, help="output data directory")
    p.add_argument("--test-frac", type=float, default=0.2, dest="test_frac")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a spec")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-frac", type=float, default=0.2, dest="test_frac")
    p.add_argument("--out", required=True, help="output data directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-rl", help="train the Q-learning agent")
    p.add_argument("--data", required=True, help="prepared data directory")
    p.add_argument("--kmax", type=int, required=True, help="query budget")
    p.add_argument("--out", required=True, help="model file to write (.sqm)")
    p.add_argument("--steps", type=int, default=None,
                   help="environment steps (default 100000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask", action="store_true",
                   help="mask invalid actions during training (default: penalties)")
    p.add_argument("--lr-start", type=float, default=None, dest="lr_start")
    p.add_argument("--lr-end", type=float, default=None, dest="lr_end")
    p.add_argument("--eps-horizon", type=int, default=None, dest="eps_horizon")
    p.add_argument("--learn-start", type=int, default=None, dest="learn_start")
    p.add_argument("--target-sync-every", type=int, default=None,
                   dest="target_sync_every")
    p.add_argument("--eval-every", type=int, default=None, dest="eval_every")
    p.add_argument("--eval-episodes", type=int, default=None, dest="eval_episodes")
    p.add_argument("--config", help="JSON file of hyperparameters (flags win)")
    p.set_defaults(func=cmd_train_rl)

    p = sub.add_parser("train-sl", help="train the fixed-question baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True, help="fixed query count")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr-start", type=float, default=None, dest="lr_start")
    p.add_argument("--lr-end", type=float, default=None, dest="lr_end")
    p.add_argument("--config", help="JSON file of hyperparameters (flags win)")
    p.set_defaults(func=cmd_train_sl)

    p = sub.add_parser("eval", help="score models and print the comparison table")
    p.add_argument("--data", required=True)
    p.add_argument("--models", required=True,
                   help="comma-separated model files")
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tsv", help="also write machine-readable rows here")
    p.add_argument("--trace", help="write per-step episode traces here (debugging)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exact optimal value/policy for a spec")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--kmax", type=int, default=2)
    p.add_argument("--min-queries", type=int, default=2, dest="min_queries")
    p.add_argument("--cost", type=float, default=0.05, help="per-query cost")
    p.add_argument("--check", help="model file to measure against the optimum")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("survey", help="interactive terminal questionnaire")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_survey)

    p = sub.add_parser("serve", help="run the HTTP questionnaire service")
    p.add_argument("--models", default=None, help="directory of *.sqm models")
    p.add_argument("--listen", default=None, help="host:port (default 127.0.0.1:8000)")
    p.add_argument("--ttl", type=int, default=None, help="session TTL seconds")
    p.add_argument("--ui", default=None, help="static web UI directory to host")
    p.add_argument("--config", help="JSON config file (flags win)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("curves", help="emit training/eval return series from a log")
    p.add_argument("--log", required=True, help="training log file")
    p.add_argument("--window", type=int, default=100,
                   help="episodes averaged per training point")
    p.set_defaults(func=cmd_curves)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except SurveyQError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
