"""Command-line experiment runner.

Subcommands::

    ppdauc run      --config exp.toml --optimizer ppd_sg --seed 7 --out runs/
    ppdauc race     --config exp.toml --optimizer ppd_sg,pga
    ppdauc plcheck  --out runs/
    ppdauc datagen  --data synthetic --out data/

Configuration is a TOML (or JSON) file of tables; every key can be
overridden with ``--set table.key=value`` and the dedicated flags win over
both. The normalised configuration is echoed into every JSON summary and
can be fed back as a config file to reproduce the run.

Exit codes: 0 success, 2 configuration or input error (the message names
the field), 3 numerical failure (the message names the step).
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import Dataset, gen_two_gaussians, make_imbalanced, read_csv, read_libsvm, write_csv, write_libsvm
from .errors import ConfigError, NumericError, PPDAUCError
from .metrics import auc_binary
from .model import Arch, ModelParams, init_params, save_checkpoint, scores
from .numerics import make_rng
from .objective import fit_pairwise
from .optimizers import (
    Monitor,
    ScheduleParams,
    ce_sgd_run,
    oauc_run,
    pga_run,
    ppd_adagrad_run,
    ppd_sg_run,
)
from .plcheck import leaky_relu_audit

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OPTIMIZERS = ("ppd_sg", "ppd_adagrad", "pga", "oauc", "ce_sgd")

_SCHEDULE = ScheduleParams().to_dict()

DEFAULTS: dict = {
    "run": {"seed": 0, "out": "out", "optimizers": ["ppd_sg"]},
    "data": {
        "source": "synthetic",
        "path": "",
        "test_path": "",
        "format": "libsvm",
        "label_column": -1,
        "n": 10000,
        "dim": 20,
        "separation": 1.0,
        "p": 0.5,
        "drop_frac": 0.0,
        "test_frac": 0.5,
    },
    "model": {"kind": "linear", "hidden": 16, "c1": 1.0, "c2": 0.01, "init": "auto"},
    "schedule": _SCHEDULE,
    "train": {"batch_size": 1, "max_samples": 100000, "prior": "known"},
    "pga": {"K": 40, "R1": 1000.0, "R2": 1000.0},
    "ce_sgd": {"eta0": 0.1, "decay_steps": []},
    "eval": {"every": 500, "strict_ties": False, "track": "iterate", "timing": False,
             "target_frac": 0.95, "oracle_iters": 5000},
    "plcheck": {"n": 2000, "dim": 3, "c1": 1.0, "c2": 0.01, "p": 0.5, "probes": 500,
                "radius": 10.0, "restarts": 20, "safety": 0.9},
}

# keys whose default is None accept a number or null
_NULLABLE = {("schedule", k) for k, v in _SCHEDULE.items() if v is None} | {("schedule", "gamma")}

_CHOICES = {
    ("data", "source"): ("synthetic", "file"),
    ("data", "format"): ("libsvm", "csv"),
    ("model", "kind"): ("linear", "leaky", "mlp"),
    ("model", "init"): ("auto", "zero", "random"),
    ("schedule", "mode"): ("theoretical", "practical"),
    ("train", "prior"): ("known", "stream"),
    ("eval", "track"): ("iterate", "average"),
}


# ---------------------------------------------------------------- config

def _coerce(table: str, key: str, value):
    field = f"{table}.{key}"
    default = DEFAULTS[table][key]
    if value is None:
        if (table, key) in _NULLABLE:
            return None
        raise ConfigError("may not be null", field)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", field)
        return value
    if isinstance(default, int) or (default is None and key in ("T0", "m0", "K", "T_max")):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"expected an integer, got {value!r}", field)
        return int(value)
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", field)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", field)
        allowed = _CHOICES.get((table, key))
        if allowed is not None and value not in allowed:
            raise ConfigError(f"must be one of {list(allowed)}, got {value!r}", field)
        return value
    if isinstance(default, list):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", field)
        if key == "optimizers":
            for v in value:
                if v not in OPTIMIZERS:
                    raise ConfigError(f"unknown optimizer {v!r}; choose from {list(OPTIMIZERS)}", field)
            return [str(v) for v in value]
        return [_coerce_int_item(field, v) for v in value]
    raise ConfigError(f"unsupported value {value!r}", field)


def _coerce_int_item(field, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"list items must be integers, got {v!r}", field)
    return int(v)


def normalize_config(raw: dict) -> dict:
    """Merge ``raw`` over the defaults, rejecting unknown tables and keys."""
    cfg = copy.deepcopy(DEFAULTS)
    for table, body in raw.items():
        if table not in DEFAULTS:
            raise ConfigError("unknown table", table)
        if not isinstance(body, dict):
            raise ConfigError("expected a table", table)
        for key, value in body.items():
            if key not in DEFAULTS[table]:
                raise ConfigError("unknown key", f"{table}.{key}")
            cfg[table][key] = _coerce(table, key, value)
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    d = cfg["data"]
    if d["source"] == "file" and not d["path"]:
        raise ConfigError("file source needs a path", "data.path")
    if d["source"] == "synthetic":
        if d["n"] < 4:
            raise ConfigError("must be >= 4", "data.n")
        if d["dim"] < 1:
            raise ConfigError("must be >= 1", "data.dim")
        if not 0.0 < d["p"] < 1.0:
            raise ConfigError("must lie in (0, 1)", "data.p")
    if not 0.0 <= d["drop_frac"] < 1.0:
        raise ConfigError("must lie in [0, 1)", "data.drop_frac")
    if not 0.0 < d["test_frac"] < 1.0:
        raise ConfigError("must lie in (0, 1)", "data.test_frac")
    for key in ("batch_size", "max_samples"):
        if cfg["train"][key] < 1:
            raise ConfigError("must be >= 1", f"train.{key}")
    if cfg["eval"]["every"] < 0:
        raise ConfigError("must be >= 0", "eval.every")
    if not 0.0 < cfg["eval"]["target_frac"] <= 1.0:
        raise ConfigError("must lie in (0, 1]", "eval.target_frac")
    if cfg["model"]["hidden"] < 1:
        raise ConfigError("must be >= 1", "model.hidden")
    if cfg["model"]["kind"] == "mlp" and cfg["model"]["init"] == "zero":
        # all-zero hidden weights are a stationary point with zero gradient
        raise ConfigError("mlp cannot start from zero weights", "model.init")
    if not cfg["run"]["optimizers"]:
        raise ConfigError("needs at least one optimizer", "run.optimizers")
    try:
        schedule_params(cfg).validate()
    except ConfigError as e:
        raise ConfigError(str(e).split(": ", 1)[-1], f"schedule.{e.field}") from None


def schedule_params(cfg: dict) -> ScheduleParams:
    return ScheduleParams(**cfg["schedule"])


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path: str | None, overrides=()) -> dict:
    raw: dict = {}
    if path:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e.strerror}", "config") from None
        try:
            raw = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
        except (ValueError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot parse {path}: {e}", "config") from None
        if isinstance(raw, dict) and "config" in raw and p.suffix == ".json":
            # a previous summary: reuse its echo
            raw = raw["config"]
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"expected table.key=value, got {item!r}", "--set")
        lhs, rhs = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"expected table.key=value, got {item!r}", "--set")
        table, key = lhs.strip().split(".", 1)
        raw.setdefault(table, {})
        if not isinstance(raw[table], dict):
            raise ConfigError("expected a table", table)
        raw[table][key] = _parse_value(rhs.strip())
    return raw


def config_echo(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True)


# ---------------------------------------------------------------- outputs

def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary sibling and rename, so readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_checkpoint(model: ModelParams, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        save_checkpoint(model, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


# ---------------------------------------------------------------- data

def prepare_data(cfg: dict) -> tuple[Dataset, Dataset]:
    """Build the train/test split. Imbalancing only touches the training part."""
    d = cfg["data"]
    seed = cfg["run"]["seed"]
    rng = make_rng(seed, "data")
    if d["source"] == "synthetic":
        mean_pos = np.full(d["dim"], d["separation"] / np.sqrt(d["dim"]))
        full = gen_two_gaussians(d["n"], d["dim"], mean_pos, 0.0, 1.0, d["p"], rng)
    else:
        full = _read(d, d["path"])
    if d["test_path"]:
        train, test = full, _read(d, d["test_path"], dim=full.dim)
    else:
        train, test = full.split(d["test_frac"], rng)
    if d["drop_frac"] > 0:
        train = make_imbalanced(train, d["drop_frac"], rng)
    for name, part in (("train", train), ("test", test)):
        if part.n_pos == 0 or part.n_neg == 0:
            raise ConfigError(f"{name} split lacks a class ({part.n_pos} pos, {part.n_neg} neg)", "data")
    return train, test


def _read(d: dict, path: str, dim=None) -> Dataset:
    try:
        if d["format"] == "libsvm":
            return read_libsvm(path, binary=True, dim=dim)
        return read_csv(path, label_column=d["label_column"], binary=True)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}", "data.path") from None


def _arch(cfg: dict, dim: int) -> Arch:
    m = cfg["model"]
    return Arch(m["kind"], dim, hidden=m["hidden"], c1=m["c1"], c2=m["c2"])


def _initial_model(cfg: dict, arch: Arch) -> ModelParams:
    init = cfg["model"]["init"]
    if init == "zero" or (init == "auto" and arch.kind != "mlp"):
        return init_params(arch, zero=True)
    return init_params(arch, make_rng(cfg["run"]["seed"], "init"))


def _class_counts(train: Dataset, test: Dataset) -> dict:
    return {
        "n_train": len(train), "n_test": len(test),
        "n_pos": train.n_pos, "n_neg": train.n_neg,
        # majority to minority, the way imbalance levels are usually quoted
        "class_ratio": max(train.n_pos, train.n_neg) / min(train.n_pos, train.n_neg),
    }


# ---------------------------------------------------------------- running

def run_optimizer(name: str, cfg: dict, train: Dataset, test: Dataset):
    """Run one optimizer on the shared split; returns ``(ModelParams, RunTrace)``.

    Every contender draws from the same named streams of the master seed,
    so two identical entries produce identical traces.
    """
    seed = cfg["run"]["seed"]
    arch = _arch(cfg, train.dim)
    model = _initial_model(cfg, arch)
    sp = schedule_params(cfg)
    tr, ev = cfg["train"], cfg["eval"]
    stream = train.stream(make_rng(seed, "stream"))
    rng = make_rng(seed, "solver")
    monitor = Monitor(arch, train, test, every=ev["every"], timing=ev["timing"],
                      strict_ties=ev["strict_ties"], track=ev["track"])
    p = train.positive_fraction() if tr["prior"] == "known" else None
    common = dict(batch_size=tr["batch_size"], monitor=monitor, name=name)
    steps = max(1, tr["max_samples"] // tr["batch_size"])
    if name == "ppd_sg":
        state, trace = ppd_sg_run(model, stream, sp, rng, p=p, max_samples=tr["max_samples"], **common)
    elif name == "ppd_adagrad":
        state, trace = ppd_adagrad_run(model, stream, sp, rng, p=p, max_samples=tr["max_samples"], **common)
    elif name == "pga":
        pg = cfg["pga"]
        state, trace = pga_run(model, stream, replace(sp, K=pg["K"]), pg["R1"], pg["R2"], rng, p=p,
                               max_samples=tr["max_samples"], **common)
    elif name == "oauc":
        state, trace = oauc_run(model, stream, sp.eta0, steps, rng, p=p, **common)
    elif name == "ce_sgd":
        ce = cfg["ce_sgd"]
        fitted, trace = ce_sgd_run(model, stream, ce["eta0"], ce["decay_steps"], steps, rng, **common)
        return fitted, trace
    else:
        raise ConfigError(f"unknown optimizer {name!r}", "run.optimizers")
    return model.with_w(state.w), trace


def _labels(names) -> list[str]:
    return [n if names.count(n) == 1 else f"{n}_{i}" for i, n in enumerate(names)]


def cmd_run(cfg: dict) -> int:
    train, test = prepare_data(cfg)
    out = Path(cfg["run"]["out"])
    counts = _class_counts(train, test)
    names = cfg["run"]["optimizers"]
    for label, name in zip(_labels(names), names):
        fitted, trace = run_optimizer(name, cfg, train, test)
        summary = {"config": cfg, "data": counts, **trace.summary()}
        atomic_write(out / f"{label}.csv", trace.to_csv())
        _atomic_checkpoint(fitted, out / f"{label}.model.json")
        atomic_write(out / f"{label}.json", _dumps(summary))
        final = trace.final
        print(f"{label}: test_auc={final.test_auc:.4f} samples={final.samples}")
    return 0


def oracle_auc(cfg: dict, train: Dataset, test: Dataset) -> float:
    """Test AUC of a long full-batch fit of the pairwise loss."""
    arch = _arch(cfg, train.dim)
    fitted = fit_pairwise(_initial_model(cfg, arch), train, max_iter=cfg["eval"]["oracle_iters"])
    h = scores(arch, fitted.w, test.X)
    return auc_binary(h[test.y == 1], h[test.y == -1], strict=cfg["eval"]["strict_ties"])


def cmd_race(cfg: dict) -> int:
    names = cfg["run"]["optimizers"]
    if len(names) < 2:
        raise ConfigError("a race needs at least two optimizers", "run.optimizers")
    train, test = prepare_data(cfg)
    out = Path(cfg["run"]["out"])
    ref = oracle_auc(cfg, train, test)
    target = cfg["eval"]["target_frac"] * ref
    rows = []
    for label, name in zip(_labels(names), names):
        _, trace = run_optimizer(name, cfg, train, test)
        atomic_write(out / f"race_{label}.csv", trace.to_csv())
        rows.append({
            "optimizer": name,
            "label": label,
            "samples_to_target": trace.samples_to_target(target),
            "final_auc": trace.final.test_auc,
        })
    result = {"config": cfg, "data": _class_counts(train, test), "oracle_auc": ref,
              "target_auc": target, "results": rows}
    atomic_write(out / "race.json", _dumps(result))
    for r in rows:
        print(f"{r['label']}: samples_to_target={r['samples_to_target']} final_auc={r['final_auc']:.4f}")
    return 0


def cmd_plcheck(cfg: dict) -> int:
    pc = cfg["plcheck"]
    report = leaky_relu_audit(n=pc["n"], dim=pc["dim"], c1=pc["c1"], c2=pc["c2"], p=pc["p"],
                              probes=pc["probes"], radius=pc["radius"], restarts=pc["restarts"],
                              safety=pc["safety"], seed=cfg["run"]["seed"])
    atomic_write(Path(cfg["run"]["out"]) / "plreport.json", report.to_json() + "\n")
    print(f"mu={report.mu_claimed:.6g} worst_ratio={report.worst_ratio:.6g} violations={report.violations}")
    return 0


def cmd_datagen(cfg: dict) -> int:
    train, test = prepare_data(cfg)
    out = Path(cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    ext, writer = (".libsvm", write_libsvm) if cfg["data"]["format"] == "libsvm" else (".csv", write_csv)
    for name, part in (("train", train), ("test", test)):
        target = out / f"{name}{ext}"
        fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{target.name}.", suffix=".tmp")
        os.close(fd)
        writer(part, tmp)
        os.replace(tmp, target)
    print(f"train: {len(train)} ({train.n_pos} pos), test: {len(test)} ({test.n_pos} pos)")
    return 0


COMMANDS = {"run": cmd_run, "race": cmd_race, "plcheck": cmd_plcheck, "datagen": cmd_datagen}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppdauc", description="Stochastic AUC maximisation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML or JSON config file (a JSON summary also works)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--optimizer", help="name, comma-separated names, 'all', or 'list'")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--mode", choices=["theoretical", "practical"])
        sp.add_argument("--data", help="'synthetic' or a dataset path")
        sp.add_argument("--set", action="append", default=[], metavar="TABLE.KEY=VALUE",
                        help="override one config value (repeatable)")
    return ap


def _apply_flags(raw: dict, args) -> dict:
    if args.seed is not None:
        raw.setdefault("run", {})["seed"] = args.seed
    if args.out is not None:
        raw.setdefault("run", {})["out"] = args.out
    if args.optimizer is not None:
        names = list(OPTIMIZERS) if args.optimizer == "all" else args.optimizer
        raw.setdefault("run", {})["optimizers"] = names
    if args.mode is not None:
        raw.setdefault("schedule", {})["mode"] = args.mode
    if args.data is not None:
        data = raw.setdefault("data", {})
        if args.data == "synthetic":
            data["source"] = "synthetic"
        else:
            data["source"] = "file"
            data["path"] = args.data
            if args.data.endswith(".csv"):
                data["format"] = "csv"
    return raw


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.optimizer == "list":
        print("\n".join(OPTIMIZERS))
        return 0
    try:
        raw = load_config(args.config, args.set)
        cfg = normalize_config(_apply_flags(raw, args))
        # divergence surfaces as NumericError, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            return COMMANDS[args.command](cfg)
    except NumericError as e:
        print(f"error: numerical failure at step {e.step}: {e}", file=sys.stderr)
        return 3
    except PPDAUCError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
