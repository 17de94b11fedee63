"""Command-line entry point: ``glucolens <command> [options]``.

Every option can also be set in a JSON config file passed with ``--config``;
the file is a flat object whose keys are the option names with dashes
replaced by underscores (``feature_set``, ``n_seeds``, ...) plus an optional
``providers`` list of LLM provider entries. Precedence, highest first:
command-line flag, config file, built-in default. Unknown config keys are
rejected.

Exit codes: 0 success, 1 computation failure, 2 input or configuration
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .counterfactuals import CfConstraints, diff_report, generate
from .ensemble import CLASSIFIER_PRESETS, HybridMode, fit_classifier, fit_soft_vote
from .errors import ExperimentError, GlucoLensError, InputError
from .evaluation import TRAINING_SIZE_SPLITS, ExperimentConfig, run_experiment, run_sweep
from .features import FeatureMatrix, FeatureSetKind, Scaler, build_feature_matrix
from .files import atomic_write_text
from .ingest import (
    assemble_participant,
    dump_dataset,
    format_activity_events,
    format_cgm,
    format_food_log,
    format_participants,
    format_work_log,
    load_dataset,
    parse_activity_events,
    parse_cgm,
    parse_food_log,
    parse_participants,
    parse_work_log,
)
from .llm import (
    LlmCache,
    PredictionTarget,
    ProviderConfig,
    default_mock_providers,
    make_provider,
    predict_rows,
)
from .models import forest_fit, gbt_fit, mlp_fit, ridge_fit
from .models.io import model_from_dict, model_to_dict
from .resampling import AdasynConfig, adasyn_balance
from .synth import SynthCohortSpec, synth_cohort

log = logging.getLogger("glucolens")

PIPELINE_FORMAT = "glucolens-pipeline"


@dataclass(frozen=True)
class Opt:
    flags: tuple
    dest: str
    default: object = None
    type: object = str
    help: str = ""
    choices: tuple | None = None
    flag: bool = False  # boolean switch


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_FEATURE_SETS = tuple(k.value for k in FeatureSetKind)
_SPLIT_KINDS = ("fraction", "balanced_count")

SHARED_MODEL_OPTS = (
    Opt(("--task",), "task", "regression", str, "regression or classification", ("regression", "classification")),
    Opt(("--target",), "target", None, str, "auc, iauc or max_bgl (regression); hyper (classification, default)"),
    Opt(("--model",), "model", "rf", str,
        "rf, gbt (xgb), ridge, mlp, mean, or a soft-vote combination such as rf+xgb+mlp"),
    Opt(("--n-est",), "n_est", 100, int, "forest size (grid: 10, 50, 100)"),
    Opt(("--max-leaf-nodes",), "max_leaf_nodes", None, int, "forest leaf cap (grid: 24, 48, 96)"),
    Opt(("--n-rounds",), "n_rounds", 100, int, "boosting rounds"),
    Opt(("--learning-rate",), "learning_rate", 0.1, float, "boosting learning rate"),
    Opt(("--max-depth",), "max_depth", 3, int, "boosted tree depth"),
    Opt(("--alpha",), "alpha", 1.0, float, "ridge penalty (grid: 1, 0.1, 0.01)"),
    Opt(("--variation",), "variation", 13, int, "MLP layer-stack variation 1-13"),
    Opt(("--epochs",), "epochs", 500, int, "MLP epochs"),
    Opt(("--balance",), "balance", True, _bool, "ADASYN-balance classification training data (true/false)"),
)

COMMAND_OPTS = {
    "synth": (
        Opt(("--out-dir",), "out_dir", None, str, "directory for the raw synthetic data files"),
        Opt(("--participants",), "participants", 10, int, "number of synthetic participants"),
    ),
    "ingest": (
        Opt(("--data-dir",), "data_dir", None, str, "directory holding the raw data layout"),
        Opt(("--cgm-dir",), "cgm_dir", None, str, "CGM files, one <participant>.csv each (default DATA_DIR/cgm)"),
        Opt(("--activity-dir",), "activity_dir", None, str,
            "activity event files, one <participant>.csv each (default DATA_DIR/activity)"),
        Opt(("--food-log",), "food_log", None, str, "food log CSV (default DATA_DIR/food_log.csv)"),
        Opt(("--work-log",), "work_log", None, str, "work log CSV (default DATA_DIR/work_log.csv)"),
        Opt(("--roster",), "roster", None, str, "participant,bmi CSV (default DATA_DIR/participants.csv)"),
        Opt(("--out",), "out", None, str, "dataset JSON to write"),
    ),
    "featurize": (
        Opt(("--dataset",), "dataset", None, str, "dataset JSON written by ingest"),
        Opt(("--feature-set",), "feature_set", "all", str, "feature set", _FEATURE_SETS),
        Opt(("--prev-day-mode",), "prev_day_mode", "previous_day", str,
            "activity window before work", ("previous_day", "midnight_to_lunch")),
        Opt(("--out",), "out", None, str, "feature CSV to write"),
    ),
    "train": (
        Opt(("--features",), "features", None, str, "feature CSV"),
        Opt(("--feature-set",), "feature_set", None, str, "expected feature set of the CSV", _FEATURE_SETS),
        *SHARED_MODEL_OPTS,
        Opt(("--out",), "out", None, str, "model JSON to write"),
    ),
    "evaluate": (
        Opt(("--features",), "features", None, str, "feature CSV"),
        *SHARED_MODEL_OPTS,
        Opt(("--preset",), "preset", None, str, "named experiment preset", ("table6-sweep",)),
        Opt(("--n-seeds",), "n_seeds", 100, int, "repetitions, one split per seed"),
        Opt(("--split-kind",), "split_kind", "fraction", str, "test split construction", _SPLIT_KINDS),
        Opt(("--test-fraction",), "test_fraction", 0.2, float, "test share for fraction splits"),
        Opt(("--n-per-class",), "n_per_class", 10, int, "test rows per class for balanced_count splits"),
        Opt(("--hybrid-mode",), "hybrid_mode", "gly_base", str, "LLM hybrid pipeline",
            tuple(m.value for m in HybridMode)),
        Opt(("--llm-provider",), "llm_provider", "claude_opus4", str, "provider used by gly_llm/v2/max"),
        Opt(("--live-llm",), "live_llm", False, _bool, "allow http providers from the config (true/false)"),
        Opt(("--out-dir",), "out_dir", None, str, "directory for report.json and report.txt"),
    ),
    "predict": (
        Opt(("--model-file",), "model_file", None, str, "model JSON written by train"),
        Opt(("--features",), "features", None, str, "feature CSV to score"),
        Opt(("--out",), "out", None, str, "predictions CSV to write"),
    ),
    "explain": (
        Opt(("--model-file",), "model_file", None, str, "classifier JSON written by train"),
        Opt(("--features",), "features", None, str, "feature CSV (training rows set ranges and MAD)"),
        Opt(("--row",), "row", 0, int, "row index of the instance to explain"),
        Opt(("--target-label",), "target_label", None, int,
            "label the counterfactuals should reach (default: the opposite of the prediction)"),
        Opt(("--k",), "k", 3, int, "number of counterfactuals"),
        Opt(("--budget",), "budget", 20000, int, "model evaluations allowed"),
        Opt(("--proximity-weight",), "proximity_weight", 0.5, float, "weight of the proximity term"),
        Opt(("--diversity-weight",), "diversity_weight", 1.0, float, "weight of the diversity term"),
        Opt(("--out",), "out", None, str, "text report to write (a .json sibling is written too)"),
    ),
}

GLOBAL_OPTS = (
    Opt(("--seed",), "seed", 0, int, "global seed; every stage derives its streams from it"),
)
CONFIG_ONLY_KEYS = {"providers"}


def _all_config_keys():
    keys = {o.dest for o in GLOBAL_OPTS} | CONFIG_ONLY_KEYS
    for opts in COMMAND_OPTS.values():
        keys |= {o.dest for o in opts}
    return keys


def build_parser():
    parser = argparse.ArgumentParser(
        prog="glucolens",
        description="Postprandial glucose modeling from CGM, activity and food logs.",
        epilog="Exit codes: 0 success, 1 computation failure, 2 input or configuration failure.",
    )
    parser.add_argument("--version", action="version", version=f"glucolens {__version__}")
    parser.add_argument("--config", default=None, help="JSON config file; flags override its values")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    for o in GLOBAL_OPTS:
        parser.add_argument(*o.flags, dest=o.dest, default=None, help=f"{o.help} (default {o.default})")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "synth": "write a synthetic cohort in the raw data layout",
        "ingest": "validate raw files and merge them into a dataset JSON",
        "featurize": "build the per-lunch feature CSV",
        "train": "fit a model and save it",
        "evaluate": "repeated-seed experiment report",
        "predict": "score rows with a saved model",
        "explain": "counterfactual explanations for one row",
    }
    for name, opts in COMMAND_OPTS.items():
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        for o in opts:
            text = o.help + (f" (default {o.default})" if o.default is not None else "")
            p.add_argument(*o.flags, dest=o.dest, default=None, help=text,
                           choices=o.choices if o.type is str else None)
    return parser


class Settings(dict):
    def __getattr__(self, name):
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None


def _convert(opt, value, source):
    try:
        value = opt.type(value) if value is not None else None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{source}: bad value for {opt.dest}: {exc}") from None
    if opt.choices and value is not None and value not in opt.choices:
        raise InputError(f"{source}: {opt.dest} must be one of {list(opt.choices)}, got {value!r}")
    return value


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError(f"config {path} must be a JSON object")
    unknown = set(cfg) - _all_config_keys()
    if unknown:
        raise InputError(f"config {path}: unknown keys {sorted(unknown)}")
    return cfg


def resolve(args, config) -> Settings:
    """Merge flags over config over defaults for the chosen command."""
    out = Settings(command=args.command, providers=config.get("providers"))
    for o in GLOBAL_OPTS + COMMAND_OPTS[args.command]:
        flag_value = getattr(args, o.dest, None)
        if flag_value is not None:
            out[o.dest] = _convert(o, flag_value, "command line")
        elif o.dest in config:
            out[o.dest] = _convert(o, config[o.dest], "config")
        else:
            out[o.dest] = o.default
    return out


def _require(s, *names):
    for n in names:
        if s.get(n) is None:
            raise InputError(f"--{n.replace('_', '-')} is required for {s.command}")


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def write_raw_layout(participants, out_dir):
    """Write participants as participants.csv, food_log.csv, work_log.csv, cgm/ and activity/."""
    atomic_write_text(os.path.join(out_dir, "participants.csv"), format_participants(participants))
    meals = [m for p in participants for m in p.meals]
    days = [w for p in participants for w in p.workdays]
    atomic_write_text(os.path.join(out_dir, "food_log.csv"), format_food_log(meals))
    atomic_write_text(os.path.join(out_dir, "work_log.csv"), format_work_log(days))
    for p in participants:
        atomic_write_text(os.path.join(out_dir, "cgm", f"{p.participant_id}.csv"), format_cgm(p.cgm))
        atomic_write_text(os.path.join(out_dir, "activity", f"{p.participant_id}.csv"),
                          format_activity_events(p.activity))


def cmd_synth(s):
    _require(s, "out_dir")
    cohort = synth_cohort(SynthCohortSpec(n_participants=s.participants, seed=s.seed))
    write_raw_layout(cohort, s.out_dir)
    print(f"wrote {len(cohort)} synthetic participants to {s.out_dir}")
    return 0


def _ingest_paths(s):
    base = s.data_dir
    def pick(value, default):
        if value is not None:
            return value
        if base is None:
            raise InputError("give --data-dir or every individual input path")
        return os.path.join(base, default)
    return (pick(s.cgm_dir, "cgm"), pick(s.activity_dir, "activity"), pick(s.food_log, "food_log.csv"),
            pick(s.work_log, "work_log.csv"), pick(s.roster, "participants.csv"))


def ingest_participants(s):
    cgm_dir, act_dir, food_path, work_path, roster_path = _ingest_paths(s)
    roster = parse_participants(_read(roster_path), source=roster_path)
    meals = parse_food_log(_read(food_path), source=food_path)
    days = parse_work_log(_read(work_path), source=work_path)
    out = []
    for pid in sorted(roster):
        cgm_path = os.path.join(cgm_dir, f"{pid}.csv")
        act_path = os.path.join(act_dir, f"{pid}.csv")
        cgm = parse_cgm(_read(cgm_path), pid, source=cgm_path)
        act = parse_activity_events(_read(act_path), pid, source=act_path)
        out.append(assemble_participant(
            pid, cgm, act, [m for m in meals if m.participant_id == pid],
            [w for w in days if w.participant_id == pid], roster[pid]))
    unknown = {m.participant_id for m in meals} - set(roster)
    if unknown:
        raise InputError(f"{food_path}: participants {sorted(unknown)} are not in {roster_path}")
    return out


def cmd_ingest(s):
    _require(s, "out")
    participants = ingest_participants(s)
    atomic_write_text(s.out, dump_dataset(participants))
    n_meals = sum(len(p.meals) for p in participants)
    n_flag = sum(len(p.flagged_meals) for p in participants)
    n_cgm = sum(len(p.cgm) for p in participants)
    print(f"ingested {len(participants)} participants: {n_meals} meals ({n_flag} flagged), "
          f"{n_cgm} CGM samples, {sum(len(p.workdays) for p in participants)} workdays")
    return 0


def cmd_featurize(s):
    _require(s, "dataset", "out")
    participants = load_dataset(_read(s.dataset))
    matrix, skipped = build_feature_matrix(participants, s.feature_set, prev_day_mode=s.prev_day_mode)
    atomic_write_text(s.out, matrix.to_csv())
    print(f"{len(matrix)} rows x {len(matrix.names)} features ({s.feature_set}); {len(skipped)} lunches skipped")
    for rid, reason in skipped:
        log.info("skipped %s: %s", rid, reason)
    return 0


def load_matrix(path, feature_set=None):
    m = FeatureMatrix.from_csv(_read(path), source=path)
    if feature_set is not None and m.set_kind is not FeatureSetKind.parse(feature_set):
        raise InputError(f"{path} holds feature set {m.set_kind.value}, not {feature_set}")
    return m


def _target(s):
    if s.task == "classification":
        if s.target not in (None, "hyper"):
            raise InputError("classification target must be hyper")
        return "hyper"
    t = s.target or "auc"
    if t not in ("auc", "iauc", "max_bgl"):
        raise InputError(f"regression target must be auc, iauc or max_bgl, got {t!r}")
    return t


def _model_params(s):
    return {
        "rf": {"n_estimators": s.n_est, "max_leaf_nodes": s.max_leaf_nodes},
        "gbt": {"n_rounds": s.n_rounds, "learning_rate": s.learning_rate, "max_depth": s.max_depth},
        "mlp": {"variation_id": s.variation, "epochs": s.epochs},
        "ridge": {"alpha": s.alpha},
    }


def _family(model):
    m = model.lower()
    return {"forest": "rf", "xgb": "gbt"}.get(m, m)


def cmd_train(s):
    _require(s, "features", "out")
    matrix = load_matrix(s.features, s.feature_set)
    target = _target(s)
    y = matrix.target(target)
    params = _model_params(s)
    fam = _family(s.model)
    scaler = None
    X = matrix.X
    if s.task == "classification":
        scaler = Scaler.fit(X)
        X = scaler.transform(X)
        if s.balance:
            X, y, _ = adasyn_balance(X, y, AdasynConfig(seed=s.seed))
        if "+" in fam or fam in CLASSIFIER_PRESETS:
            model = fit_soft_vote(X, y, fam, s.seed, params)
        elif fam in ("rf", "gbt", "mlp"):
            model = fit_classifier(fam, X, y, s.seed, params[fam])
        else:
            raise InputError(f"unknown classifier {s.model!r}")
    else:
        if fam == "rf":
            model = forest_fit(X, y, task="regression", seed=s.seed, **params["rf"])
        elif fam == "gbt":
            model = gbt_fit(X, y, task="regression", seed=s.seed, **params["gbt"])
        elif fam in ("ridge", "mlp"):
            scaler = Scaler.fit(X)
            X = scaler.transform(X)
            model = (ridge_fit(X, y, **params["ridge"]) if fam == "ridge"
                     else mlp_fit(X, y, task="regression", seed=s.seed, **params["mlp"]))
        else:
            raise InputError(f"unknown regressor {s.model!r}")
    doc = {
        "format": PIPELINE_FORMAT, "version": 1, "task": s.task, "target": target,
        "feature_set": matrix.set_kind.value, "feature_names": list(matrix.names), "seed": s.seed,
        "scaler": None if scaler is None else {"mean": scaler.mean.tolist(), "scale": scaler.scale.tolist()},
        "model": model_to_dict(model),
    }
    atomic_write_text(s.out, json.dumps(doc, sort_keys=True) + "\n")
    print(f"trained {model.kind} ({s.task}, target {target}) on {len(matrix)} rows; seed {s.seed}")
    return 0


class Pipeline:
    """A saved model plus the z-scoring it was trained behind; accepts raw features."""

    def __init__(self, doc):
        if doc.get("format") != PIPELINE_FORMAT or doc.get("version") != 1:
            raise InputError("not a glucolens model file")
        self.doc = doc
        self.task = doc["task"]
        self.names = tuple(doc["feature_names"])
        sc = doc["scaler"]
        self.scaler = None if sc is None else Scaler(np.array(sc["mean"]), np.array(sc["scale"]))
        self.model = model_from_dict(doc["model"])

    @classmethod
    def load(cls, path):
        try:
            return cls(json.loads(_read(path)))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path} is not valid JSON: {exc}") from None

    def _x(self, X):
        return X if self.scaler is None else self.scaler.transform(X)

    def predict(self, X):
        return self.model.predict(self._x(X))

    def predict_proba(self, X):
        return self.model.predict_proba(self._x(X))


def cmd_predict(s):
    _require(s, "model_file", "features", "out")
    pipe = Pipeline.load(s.model_file)
    matrix = load_matrix(s.features)
    if matrix.names != pipe.names:
        raise InputError("feature columns differ from the ones the model was trained on")
    pred = pipe.predict(matrix.X)
    lines = ["row,prediction"]
    if pipe.task == "classification":
        proba = pipe.predict_proba(matrix.X)[:, 1]
        lines = ["row,prediction,probability"]
        lines += [f"{i},{int(p)},{q!r}" for i, (p, q) in enumerate(zip(pred, proba.tolist()))]
    else:
        lines += [f"{i},{float(p)!r}" for i, p in enumerate(pred)]
    atomic_write_text(s.out, "\n".join(lines) + "\n")
    print(f"scored {len(matrix)} rows -> {s.out}")
    return 0


def cmd_explain(s):
    _require(s, "model_file", "features")
    pipe = Pipeline.load(s.model_file)
    if pipe.task != "classification":
        raise InputError("explain needs a classification model")
    matrix = load_matrix(s.features)
    if matrix.names != pipe.names:
        raise InputError("feature columns differ from the ones the model was trained on")
    if not 0 <= s.row < len(matrix):
        raise InputError(f"--row must lie in [0, {len(matrix) - 1}]")
    constraints = CfConstraints.from_training(matrix.X, matrix.names)
    instance = matrix.vector(s.row)
    target = s.target_label
    if target is None:
        target = 1 - int(pipe.predict(matrix.X[s.row:s.row + 1])[0])
    cf = generate(pipe, instance, target, k=s.k, constraints=constraints, budget=s.budget, seed=s.seed,
                  proximity_weight=s.proximity_weight, diversity_weight=s.diversity_weight)
    text = diff_report(cf)
    if s.out:
        atomic_write_text(s.out, text)
        atomic_write_text(os.path.splitext(s.out)[0] + ".json", cf.to_json() + "\n")
    sys.stdout.write(text)
    return 0


def _providers(s):
    if not s.providers:
        return default_mock_providers(s.seed)
    return [make_provider(ProviderConfig.from_dict(d), live=s.live_llm, seed=s.seed) for d in s.providers]


def _llm_columns(s, matrix, target):
    mode = HybridMode.parse(s.hybrid_mode)
    if mode is HybridMode.GlyBase:
        return None
    if target not in ("auc", "max_bgl"):
        raise InputError("LLM pipelines predict auc or max_bgl only")
    cache = LlmCache(os.path.join(s.out_dir, "llm_cache.json") if s.out_dir else None)
    vectors = [matrix.vector(i) for i in range(len(matrix))]
    columns, refused = predict_rows(_providers(s), vectors, PredictionTarget.parse(target), cache=cache)
    for pid in refused:
        print(f"provider {pid} declined to predict; its column is excluded", file=sys.stderr)
    return columns


def _slug(label):
    return re.sub(r"[^A-Za-z0-9]+", "-", label).strip("-")


def cmd_evaluate(s):
    _require(s, "features")
    matrix = load_matrix(s.features)
    target = _target(s)
    fam = _family(s.model)
    params = _model_params(s)
    if s.split_kind == "balanced_count":
        split = {"kind": "balanced_count", "n_per_class": s.n_per_class}
    else:
        split = {"kind": "fraction", "test_fraction": s.test_fraction}
    cfg = ExperimentConfig(
        task=s.task, target=target, model=s.model,
        model_params=params.get(fam, {}) if "+" not in fam and fam != "mean" else {},
        member_params={k: v for k, v in params.items() if k in ("rf", "gbt", "mlp")},
        split=split, n_seeds=s.n_seeds, seed=s.seed, balance=s.balance,
        hybrid_mode=s.hybrid_mode, llm_provider=s.llm_provider,
    )
    llm = _llm_columns(s, matrix, target) if s.task == "regression" else None
    if s.preset == "table6-sweep":
        reports = run_sweep(matrix, cfg, TRAINING_SIZE_SPLITS, llm)
    else:
        reports = [run_experiment(matrix, cfg, llm)]
    for r in reports:
        sys.stdout.write(r.to_text())
        if s.out_dir:
            stem = f"report-{_slug(r.label)}" if r.label else "report"
            atomic_write_text(os.path.join(s.out_dir, stem + ".json"), r.to_json())
            atomic_write_text(os.path.join(s.out_dir, stem + ".txt"), r.to_text())
    return 0


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "featurize": cmd_featurize, "train": cmd_train,
    "evaluate": cmd_evaluate, "predict": cmd_predict, "explain": cmd_explain,
}


def _exit_code(exc):
    if isinstance(exc, ExperimentError):
        return _exit_code(exc.cause)
    return 2 if isinstance(exc, InputError) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        settings = resolve(args, load_config(args.config))
        return COMMANDS[args.command](settings)
    except GlucoLensError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
