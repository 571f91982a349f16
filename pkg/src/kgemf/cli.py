"""Batch command-line pipeline: split, train, evaluate, hpo.

Exit codes: 0 success, 1 data/runtime error, 2 invalid configuration or
incompatible composition. Config files are single JSON documents; unknown
keys are rejected before any work starts.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time


from . import amo, hpo as hpo_mod, training
from .errors import ConfigError, KgemfError, UnknownEntity
from .evaluation import evaluate
from .graph import (
    DatasetSplits,
    TripleSet,
    Vocabulary,
    add_inverse_relations,
    parse_triples,
    random_split,
    serialize_triples,
)
from .models import MODEL_KINDS, init_model, load_checkpoint, save_checkpoint
from .synthetic import ring_kg

MEMORY_BUDGET_ENV = "KGEMF_MEMORY_BUDGET_BYTES"

# section -> key -> (type(s), default); None default means optional
_SCHEMA = {
    "dataset": {
        "train": (str, None),
        "validation": (str, None),
        "test": (str, None),
        "raw": (str, None),
        "ratios": (list, [0.8, 0.1, 0.1]),
        "split_seed": (int, 0),
        "synthetic_entities": (int, None),
        "synthetic_seed": (int, 0),
    },
    "model": {
        "kind": (str, "transe"),
        "dim": (int, 32),
        "init_scheme": (str, "uniform_xavier"),
        "seed": (int, 0),
        "p_norm": (int, 2),
    },
    "training": {
        "approach": (str, "slcwa"),
        "loss": (str, "margin_ranking"),
        "margin": ((int, float), 1.0),
        "temperature": ((int, float), 1.0),
        "reduction": (str, "mean"),
        "batch_size": (int, 128),
        "sub_batch_size": (int, None),
        "num_negatives": (int, 1),
        "corruption_mode": (str, "both"),
        "epochs": (int, 100),
        "seed": (int, 0),
        "learning_rate": ((int, float), 0.01),
        "optimizer": (str, "adam"),
        "regularizer": (str, "noop"),
        "regularizer_weight": ((int, float), 0.0),
        "regularizer_power": ((int, float), 3.0),
        "inverse_relations": (bool, False),
    },
    "evaluation": {
        "ks": (list, [1, 3, 5, 10]),
        "filtered": (bool, True),
    },
    "early_stopping": {
        "enabled": (bool, False),
        "patience": (int, 2),
        "frequency": (int, 10),
        "relative_delta": ((int, float), 0.0),
        "metric": (str, "both.average.mean_reciprocal_rank"),
        "direction": (str, "maximize"),
    },
    "hpo": {
        "space": (dict, None),
        "sampler": (str, "random"),
        "budget": (int, 10),
        "objective": (str, "both.average.mean_reciprocal_rank"),
        "direction": (str, "maximize"),
        "n_retrain": (int, 1),
        "seed": (int, 0),
        "retrain_on_validation": (bool, False),
    },
    "amo": {
        "memory_budget_bytes": (int, None),
        "requested_batch_size": (int, None),
    },
}
_TOP_LEVEL = set(_SCHEMA) | {"output_dir"}


def validate_config(raw: dict) -> dict:
    """Merge with defaults; reject unknown keys and wrongly typed values."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    cfg: dict = {"output_dir": raw.get("output_dir", "out")}
    for section, keys in _SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section {section!r} must be an object")
        bad = set(given) - set(keys)
        if bad:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(bad)}")
        out = {}
        for key, (types, default) in keys.items():
            value = given.get(key, default)
            if value is not None and not isinstance(value, types):
                raise ConfigError(f"{section}.{key} has wrong type {type(value).__name__}")
            if isinstance(value, bool) and types in (int, (int, float)):
                raise ConfigError(f"{section}.{key} has wrong type bool")
            out[key] = value
        cfg[section] = out
    _check_composition(cfg)
    return cfg


def _check_composition(cfg: dict) -> None:
    model = cfg["model"]
    train = cfg["training"]
    if model["kind"] not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {model['kind']!r}")
    if train["approach"] not in ("slcwa", "lcwa"):
        raise ConfigError(f"unknown training approach {train['approach']!r}")
    allowed = training.SLCWA_LOSSES if train["approach"] == "slcwa" else training.LCWA_LOSSES
    if train["loss"] not in allowed:
        raise ConfigError(
            f"loss {train['loss']!r} is incompatible with approach {train['approach']!r}; "
            f"allowed: {', '.join(allowed)}"
        )
    if train["optimizer"] not in ("sgd", "adam"):
        raise ConfigError(f"unknown optimizer {train['optimizer']!r}")
    if model["p_norm"] not in (1, 2):
        raise ConfigError("model.p_norm must be 1 or 2")


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def encode_with_vocab(text: str, vocab: Vocabulary, base: TripleSet) -> TripleSet:
    """Parse TSV with a fixed vocabulary; unknown labels raise UnknownEntity."""
    unknown: list[str] = []
    triples: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    for line in text.split("\n"):
        if not line.strip():
            continue
        h, r, t = line.rstrip("\r").split("\t")
        missing = [lbl for lbl in (h, t) if lbl not in vocab.entity_to_id]
        if r not in vocab.relation_to_id:
            missing.append(r)
        if missing:
            unknown.extend(missing)
            continue
        triple = (vocab.entity_to_id[h], vocab.relation_to_id[r], vocab.entity_to_id[t])
        if triple not in seen:
            seen.add(triple)
            triples.append(triple)
    if unknown:
        raise UnknownEntity(sorted(set(unknown)))
    return TripleSet(
        triples=tuple(triples),
        num_entities=base.num_entities,
        num_relations_base=base.num_relations_base,
    )


def load_dataset(cfg: dict) -> tuple[DatasetSplits, Vocabulary]:
    ds = cfg["dataset"]
    ratios = tuple(float(x) for x in ds["ratios"])
    if ds["synthetic_entities"] is not None:
        ts, vocab = ring_kg(ds["synthetic_entities"], ds["synthetic_seed"])
        splits = random_split(ts, ratios, ds["split_seed"])
    elif ds["raw"] is not None:
        ts, vocab, _ = parse_triples(_read(ds["raw"]))
        splits = random_split(ts, ratios, ds["split_seed"])
    elif ds["train"] is not None:
        full_text = _read(ds["train"])
        train_ts, vocab, _ = parse_triples(full_text)
        valid = (
            encode_with_vocab(_read(ds["validation"]), vocab, train_ts)
            if ds["validation"] else
            TripleSet((), train_ts.num_entities, train_ts.num_relations_base)
        )
        test = (
            encode_with_vocab(_read(ds["test"]), vocab, train_ts)
            if ds["test"] else
            TripleSet((), train_ts.num_entities, train_ts.num_relations_base)
        )
        splits = DatasetSplits(train=train_ts, validation=valid, test=test)
    else:
        raise ConfigError("dataset section needs 'train', 'raw', or 'synthetic_entities'")
    return splits, vocab


def _union(splits: DatasetSplits) -> TripleSet:
    triples = splits.train.triples + splits.validation.triples + splits.test.triples
    return TripleSet(
        triples=tuple(dict.fromkeys(triples)),
        num_entities=splits.train.num_entities,
        num_relations_base=splits.train.num_relations_base,
    )


def _train_config(cfg: dict, seed: int | None = None, batch_size: int | None = None,
                  sub_batch_size: int | None = None) -> training.TrainConfig:
    t = dict(cfg["training"])
    if seed is not None:
        t["seed"] = seed
    if batch_size is not None:
        t["batch_size"] = batch_size
    if sub_batch_size is not None:
        t["sub_batch_size"] = sub_batch_size
    return training.TrainConfig(**t)


def _apply_amo(cfg: dict, model_cfg: dict, train_cfg_dict: dict, num_entities: int,
               num_train: int):
    """Returns (batch_size, sub_batch_size) after the budget search, or passthrough."""
    budget_bytes = cfg["amo"]["memory_budget_bytes"]
    env = os.environ.get(MEMORY_BUDGET_ENV)
    if env:
        budget_bytes = int(env)
    requested = cfg["amo"]["requested_batch_size"] or train_cfg_dict["batch_size"]
    requested = max(1, min(requested, num_train))
    if budget_bytes is None:
        return requested, train_cfg_dict["sub_batch_size"]

    budget = amo.MemoryBudget(budget_bytes)
    dim = model_cfg["dim"]
    n_params = num_entities * dim * 4  # upper bound over table layouts
    mode = "train_slcwa" if train_cfg_dict["approach"] == "slcwa" else "train_lcwa"
    mm = amo.MemoryModel(
        num_parameters=n_params,
        dim=dim,
        num_entities=num_entities,
        num_negatives=train_cfg_dict["num_negatives"],
        optimizer=train_cfg_dict["optimizer"],
        mode=mode,
    )
    batch = amo.find_max_batch(requested, amo.analytic_probe(mm, budget))
    sub = amo.find_max_sub_batch(batch, amo.analytic_probe(mm, budget))
    return batch, (sub if sub < batch else None)


def run_training_pipeline(cfg: dict, seed: int | None = None,
                          eval_split: str = "test", train_on_validation: bool = False):
    """Shared train+evaluate pipeline used by cmd_train and HPO trials.

    Returns (params, vocab, report, manifest_extras).
    """
    splits, vocab = load_dataset(cfg)
    model_cfg = cfg["model"]
    model_seed = seed if seed is not None else model_cfg["seed"]
    train_seed = seed if seed is not None else cfg["training"]["seed"]

    train_set = splits.train
    if train_on_validation and len(splits.validation):
        train_set = TripleSet(
            triples=tuple(dict.fromkeys(train_set.triples + splits.validation.triples)),
            num_entities=train_set.num_entities,
            num_relations_base=train_set.num_relations_base,
        )

    inverse = cfg["training"]["inverse_relations"]
    num_relations = train_set.num_relations_base * (2 if inverse else 1)
    if inverse:
        train_set = add_inverse_relations(train_set)

    batch, sub_batch = _apply_amo(
        cfg, model_cfg, cfg["training"], train_set.num_entities, len(train_set)
    )
    tcfg = _train_config(cfg, seed=train_seed, batch_size=batch, sub_batch_size=sub_batch)

    params = init_model(
        model_cfg["kind"], train_set.num_entities, num_relations, model_cfg["dim"],
        seed=model_seed, scheme=model_cfg["init_scheme"],
        inverse_relations=inverse, p_norm=model_cfg["p_norm"],
    )

    stopper = None
    eval_fn = None
    es = cfg["early_stopping"]
    if es["enabled"] and len(splits.validation):
        stopper = training.EarlyStopper(
            patience=es["patience"], frequency=es["frequency"],
            relative_delta=float(es["relative_delta"]),
            metric=es["metric"], direction=es["direction"],
        )
        known = _union(splits)

        def eval_fn(p, _known=known, _valid=splits.validation, _metric=es["metric"]):
            rep = evaluate(p, _valid, _known, ks=tuple(cfg["evaluation"]["ks"]),
                           filtered=cfg["evaluation"]["filtered"], with_auc=False)
            return rep[_metric]

    t0 = time.monotonic()
    if tcfg.approach == "slcwa":
        params, history, stopped = training.train_slcwa(params, train_set, tcfg, stopper, eval_fn)
    else:
        params, history, stopped = training.train_lcwa(params, train_set, tcfg, stopper, eval_fn)
    wall = time.monotonic() - t0

    target = splits.test if eval_split == "test" else splits.validation
    report = None
    if len(target):
        report = evaluate(
            params, target, _union(splits),
            ks=tuple(cfg["evaluation"]["ks"]), filtered=cfg["evaluation"]["filtered"],
        )
    extras = {
        "batch_size": batch,
        "sub_batch_size": sub_batch,
        "epochs_run": len(history),
        "stopped_epoch": stopped,
        "final_loss": history[-1] if history else None,
        "wall_time_seconds": wall,
    }
    return params, vocab, report, extras


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def cmd_split(args) -> int:
    ts, vocab, _ = parse_triples(_read(args.input))
    ratios = tuple(float(x) for x in args.ratios.split(","))
    splits = random_split(ts, ratios, args.seed)
    os.makedirs(args.out, exist_ok=True)
    for name, part in (("train", splits.train), ("valid", splits.validation), ("test", splits.test)):
        path = os.path.join(args.out, f"{name}.tsv")
        with open(path, "w", encoding="utf-8") as f:
            if len(part):
                f.write(serialize_triples(part, vocab))
    return 0


def cmd_train(args) -> int:
    cfg = validate_config(json.loads(_read(args.config)))
    seed = args.seed
    out = args.out or cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    params, vocab, report, extras = run_training_pipeline(cfg, seed=seed)
    save_checkpoint(os.path.join(out, "checkpoint.npz"), params, vocab)
    if report is not None:
        _write_json(os.path.join(out, "metrics.json"), report.metrics)
    manifest = {
        "config_hash": _config_hash(cfg),
        "seed": seed if seed is not None else cfg["training"]["seed"],
        **extras,
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return 0


def cmd_evaluate(args) -> int:
    params, vocab = load_checkpoint(args.checkpoint)
    if vocab is None:
        raise KgemfError("checkpoint carries no vocabulary; cannot decode labels")
    base = TripleSet((), params.num_entities, params.num_relations_base)
    test = encode_with_vocab(_read(args.test), vocab, base)
    known_triples = test.triples
    for path in args.known or []:
        known_triples = known_triples + encode_with_vocab(_read(path), vocab, base).triples
    known = TripleSet(tuple(dict.fromkeys(known_triples)), params.num_entities,
                      params.num_relations_base)
    report = evaluate(params, test, known, ks=tuple(args.ks),
                      filtered=not args.unfiltered)
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "metrics.json"), report.metrics)
    return 0


def _space_from_config(space_cfg: dict) -> hpo_mod.SearchSpace:
    dims: dict[str, object] = {}
    for name, spec in space_cfg.items():
        kind = spec.get("type")
        if kind == "categorical":
            dims[name] = hpo_mod.Categorical(tuple(spec["values"]))
        elif kind == "int":
            dims[name] = hpo_mod.IntRange(spec["low"], spec["high"], spec.get("step", 1))
        elif kind == "real":
            dims[name] = hpo_mod.RealRange(
                spec["low"], spec["high"], spec.get("scale", "linear"), spec.get("step")
            )
        else:
            raise ConfigError(f"search dimension {name!r} has unknown type {kind!r}")
    return hpo_mod.SearchSpace(dims)


def _override(cfg: dict, dotted: str, value):
    section, key = dotted.split(".", 1)
    if section not in cfg or key not in cfg[section]:
        raise ConfigError(f"search dimension targets unknown config key {dotted!r}")
    cfg[section][key] = value


def cmd_hpo(args) -> int:
    cfg = validate_config(json.loads(_read(args.config)))
    if cfg["hpo"]["space"] is None:
        raise ConfigError("hpo.space section is required for the hpo command")
    out = args.out or cfg["output_dir"]
    os.makedirs(out, exist_ok=True)

    space = _space_from_config(cfg["hpo"]["space"])
    hcfg = hpo_mod.HpoConfig(
        sampler=cfg["hpo"]["sampler"], budget=cfg["hpo"]["budget"],
        objective=cfg["hpo"]["objective"], direction=cfg["hpo"]["direction"],
        n_retrain=cfg["hpo"]["n_retrain"], seed=cfg["hpo"]["seed"],
        retrain_on_validation=cfg["hpo"]["retrain_on_validation"],
    )

    def trial_pipeline(assignment, _splits, seed):
        trial_cfg = json.loads(json.dumps(cfg))
        for dotted, value in assignment.items():
            _override(trial_cfg, dotted, value)
        _check_composition(trial_cfg)
        _, _, report, extras = run_training_pipeline(trial_cfg, seed=seed, eval_split="validation")
        if report is None:
            raise KgemfError("empty validation split; no objective available")
        return report[hcfg.objective], extras["epochs_run"], extras["stopped_epoch"] is not None

    best, records = hpo_mod.run_hpo(space, hcfg, None, trial_pipeline)

    with open(os.path.join(out, "trials.jsonl"), "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps({
                "index": rec.index, "config": rec.config, "objective": rec.objective,
                "seed": rec.seed, "epochs_run": rec.epochs_run,
                "stopped_early": rec.stopped_early, "failed": rec.failed,
                "error": rec.error,
            }, sort_keys=True) + "\n")

    best_cfg = json.loads(json.dumps(cfg))
    for dotted, value in best.config.items():
        _override(best_cfg, dotted, value)
    _write_json(os.path.join(out, "best_config.json"), best_cfg)

    def retrain_pipeline(assignment, _splits, seed):
        run_cfg = json.loads(json.dumps(cfg))
        for dotted, value in assignment.items():
            _override(run_cfg, dotted, value)
        _, _, report, _ = run_training_pipeline(
            run_cfg, seed=seed, eval_split="test",
            train_on_validation=hcfg.retrain_on_validation,
        )
        if report is None:
            raise KgemfError("empty test split; nothing to report")
        return report.metrics

    reports, mean, std = hpo_mod.final_retrain(
        best.config, hcfg.n_retrain, hcfg.seed, None, retrain_pipeline
    )
    _write_json(os.path.join(out, "final_report.json"), {
        "n": hcfg.n_retrain,
        "best_trial_index": best.index,
        "best_objective": best.objective,
        "mean": mean,
        "std": std,
        "runs": [r for r in reports],
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgemf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="split a raw TSV into train/valid/test")
    p.add_argument("input")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train and evaluate per a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a test TSV")
    p.add_argument("checkpoint")
    p.add_argument("test")
    p.add_argument("--known", action="append", help="extra TSVs for filtering")
    p.add_argument("--ks", type=int, nargs="+", default=[1, 3, 5, 10])
    p.add_argument("--unfiltered", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("hpo", help="hyper-parameter search per a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_hpo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KgemfError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
