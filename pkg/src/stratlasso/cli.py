"""Command-line driver: ``stratlasso synth | fit | eval | report``.

Every subcommand reads a flat key-value config file::

    # comment
    section.key = value

Relative paths in a config are resolved against the config file's
directory.  A few flags (``--model``, ``--data-config``, ``--alpha``,
``--seed``) override the matching keys.  Each output directory receives a
``manifest.json`` recording the command, the config digest, the seed, the
input and output files and the library version.

Exit codes: 0 success, 2 configuration error, 3 data or degeneracy error,
4 evaluation pairing error or missing baseline.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import DataConfig, assemble, make_folds, split_train_test
from .dataio import read_dataset, write_dataset
from .errors import DataError, InvalidConfig, MissingBaseline, StratLassoError
from .evaluation import Run, build_report, roc_points
from .glinternet import (GlinternetModel, cv_glinternet, export_network,
                         path_statistics_csv)
from .lasso import LassoModel, fit_lasso_cv
from .pretrained import DEFAULT_ALPHA_GRID, PretrainedModel, fit_pretrained
from .synth import cohort_preset, generate_with_truth, write_truth

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PAIRING = 0, 2, 3, 4


class ConfigError(InvalidConfig):
    pass


class PairingError(StratLassoError):
    pass


# --- config --------------------------------------------------------------------

KNOWN_KEYS = {
    "synth": {"synth.preset", "synth.seed", "split.test_fraction", "split.seed"},
    "fit": {"data.train", "data.schema", "data.config", "model.kind", "cv.folds",
            "cv.seed", "path.n_lambda", "path.eps_ratio", "ptlasso.alpha",
            "ptlasso.alpha_grid"},
    "eval": {"data.test", "data.schema", "eval.baseline", "eval.models",
             "eval.target_group", "eval.outcome", "eval.allow_fallback"},
    "report": {"report.scores", "report.baseline", "report.inc_reference"},
}

PATH_KEYS = {"data.train", "data.test", "data.schema", "eval.baseline",
             "eval.models", "report.scores"}


def parse_config(text):
    """Parse ``section.key = value`` lines into an ordered dict of strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or "." not in key or not key.split(".", 1)[1]:
            raise ConfigError(f"config line {lineno}: expected 'section.key = value'")
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_config(cfg):
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def _load_config(command, path, overrides):
    raw, base = b"", Path.cwd()
    cfg = {}
    if path is not None:
        p = Path(path)
        try:
            raw = p.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        cfg = parse_config(raw.decode("utf-8"))
        base = p.resolve().parent
    unknown = sorted(set(cfg) - KNOWN_KEYS[command])
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    cfg.update({k: str(v) for k, v in overrides.items() if v is not None})
    for k in PATH_KEYS & set(cfg):
        parts = [s.strip() for s in cfg[k].split(",") if s.strip()]
        cfg[k] = ",".join(str((base / s).resolve()) if not Path(s).is_absolute() else s
                          for s in parts)
    digest = hashlib.sha256(raw if path is not None
                            else format_config(cfg).encode()).hexdigest()
    return cfg, digest


def _get(cfg, key, cast=str, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing config key {key!r}")
        return default
    try:
        return cast(cfg[key])
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r}") from None


def _paths(cfg, key):
    return [Path(s) for s in _get(cfg, key).split(",") if s]


def _data_config(text):
    try:
        return DataConfig.parse(text)
    except DataError as exc:
        raise ConfigError(str(exc)) from None


# --- manifest ------------------------------------------------------------------

def _write_manifest(out, command, digest, cfg, seed, inputs, outputs, started):
    manifest = {
        "command": command,
        "config_sha256": digest,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(p) for p in outputs),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _write(out, name, text, outputs):
    path = out / name
    path.write_text(text)
    outputs.append(name)


# --- subcommands ---------------------------------------------------------------

def cmd_synth(cfg, out, threads):
    preset = _get(cfg, "synth.preset")
    seed = _get(cfg, "synth.seed", int, 0)
    frac = _get(cfg, "split.test_fraction", float, 0.3)
    split_seed = _get(cfg, "split.seed", int, seed)
    config = cohort_preset(preset, seed=seed)
    ds, logit = generate_with_truth(config)
    outputs = []
    write_dataset(ds, out / "data.csv", out / "schema.txt")
    write_truth(out / "truth.csv", ds, logit)
    outputs += ["data.csv", "schema.txt", "truth.csv"]
    train, test = split_train_test(ds, frac, split_seed)
    write_dataset(train, out / "train.csv")
    write_dataset(test, out / "test.csv")
    outputs += ["train.csv", "test.csv"]
    return seed, [], outputs


def _fit_lasso(train, folds, cfg, threads, out, outputs):
    eps = _get(cfg, "path.eps_ratio", float) if "path.eps_ratio" in cfg else None
    model = fit_lasso_cv(train, folds, n_lambda=_get(cfg, "path.n_lambda", int, 50),
                         eps_ratio=eps, threads=threads)
    _write(out, "cv.csv", model.cv.to_csv(), outputs)
    return model


def _fit_glinternet(train, folds, cfg, threads, out, outputs):
    eps = _get(cfg, "path.eps_ratio", float) if "path.eps_ratio" in cfg else None
    model = cv_glinternet(train, folds, n_lambda=_get(cfg, "path.n_lambda", int, 50),
                          eps_ratio=eps, threads=threads)
    _write(out, "cv.csv", model.cv.to_csv(), outputs)
    _write(out, "path_statistics.csv", path_statistics_csv(model), outputs)
    _write(out, "network.csv", export_network(model, model.selected), outputs)
    return model


def _fit_ptlasso(train, folds, cfg, threads, out, outputs):
    n_lambda = _get(cfg, "path.n_lambda", int, 50)
    alpha = _get(cfg, "ptlasso.alpha", float) if "ptlasso.alpha" in cfg else None
    if alpha is not None and not 0.0 <= alpha <= 1.0:
        raise ConfigError("ptlasso.alpha must lie in [0, 1]")
    grid = DEFAULT_ALPHA_GRID
    if "ptlasso.alpha_grid" in cfg:
        try:
            grid = tuple(float(s) for s in cfg["ptlasso.alpha_grid"].split(","))
        except ValueError:
            raise ConfigError("ptlasso.alpha_grid must be comma-separated numbers") from None
        if not grid or min(grid) < 0 or max(grid) > 1:
            raise ConfigError("ptlasso.alpha_grid values must lie in [0, 1]")
    model = fit_pretrained(train, folds, alpha, grid, n_lambda, threads=threads)
    _write(out, "cv.csv", model.overall.cv.to_csv(), outputs)
    for g, fit in model.group_fits.items():
        _write(out, f"cv_{g}.csv", fit.cv.to_csv(), outputs)
    if model.alpha_curve is not None:
        rows = ["alpha,mean_deviance"] + [f"{a},{s!r}" for a, s in model.alpha_curve.items()]
        _write(out, "cv_alpha.csv", "\n".join(rows) + "\n", outputs)
    return model


FITTERS = {"lasso": _fit_lasso, "glinternet": _fit_glinternet, "ptlasso": _fit_ptlasso}


def cmd_fit(cfg, out, threads):
    kind = _get(cfg, "model.kind")
    if kind not in FITTERS:
        raise ConfigError(f"unknown model kind {kind!r} (lasso, glinternet, ptlasso)")
    data_cfg = _data_config(_get(cfg, "data.config", str, "all"))
    k = _get(cfg, "cv.folds", int, 3)
    seed = _get(cfg, "cv.seed", int, 0)
    if k < 2:
        raise ConfigError("cv.folds must be at least 2")
    train_path, schema_path = _paths(cfg, "data.train")[0], _paths(cfg, "data.schema")[0]
    full = read_dataset(train_path, schema_path)
    train = assemble(full, data_cfg)
    # folds are dealt once on the whole file so every data config shares them
    rows = np.flatnonzero(np.isin(full.group, train.group_labels()))
    folds = make_folds(full, k, seed).restrict(rows)
    outputs = []
    model = FITTERS[kind](train, folds, cfg, threads, out, outputs)
    doc = {"method": kind, "data_config": str(data_cfg), "data_label": data_cfg.label,
           "seed": seed, "version": __version__, "model": model.to_dict()}
    _write(out, "model.json", json.dumps(doc, indent=1) + "\n", outputs)
    return seed, [train_path, schema_path], outputs


def load_model_file(path):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc.strerror}") from None
    kind = doc["model"]["kind"]
    cls = {"lasso": LassoModel, "glinternet": GlinternetModel,
           "ptlasso": PretrainedModel}[kind]
    return doc, cls.from_dict(doc["model"])


def score_model(model, X, groups, allow_fallback=False):
    if isinstance(model, PretrainedModel):
        return model.predict_proba(X, groups, allow_fallback=allow_fallback)
    return model.predict_proba(X)


def _safe(text):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in text)


def cmd_eval(cfg, out, threads):
    baseline_path = _paths(cfg, "eval.baseline")[0]
    if not baseline_path.is_file():
        raise MissingBaseline(f"baseline model file not found: {baseline_path}")
    model_paths = _paths(cfg, "eval.models") if "eval.models" in cfg else []
    test_path, schema_path = _paths(cfg, "data.test")[0], _paths(cfg, "data.schema")[0]
    outcome = _get(cfg, "eval.outcome", str, "y")
    target = _get(cfg, "eval.target_group")
    fallback = _get(cfg, "eval.allow_fallback", str, "false").lower() in ("1", "true", "yes")
    test = read_dataset(test_path, schema_path)
    rows = np.flatnonzero(test.group == target)
    if rows.size == 0:
        raise DataError(f"test data has no rows for group {target!r}")
    X, y, groups = test.X[rows], test.y[rows], test.group[rows]

    runs, outputs = [], []
    base_doc, _ = load_model_file(baseline_path)
    for path in [baseline_path] + model_paths:
        doc, model = load_model_file(path)
        scores = score_model(model, X, groups, fallback)
        runs.append(Run(doc["method"], doc["data_label"], outcome, scores, y))
    score_lines = ["method,data,outcome,row,label,score"]
    for run in runs:
        for r, lab, s in zip(rows, run.labels, run.scores):
            score_lines.append(f"{run.method},{run.data},{run.outcome},{r},{lab},{float(s)!r}")
        roc = roc_points(run.scores, run.labels)
        _write(out, f"roc_{_safe(run.method)}_{_safe(run.data)}_{_safe(outcome)}.csv",
               roc.to_csv(), outputs)
    _write(out, "scores.csv", "\n".join(score_lines) + "\n", outputs)
    _write_report(runs, base_doc["method"], None, out, outputs,
                  baseline_data=base_doc["data_label"])
    return None, [baseline_path, *model_paths, test_path, schema_path], outputs


def _write_report(runs, baseline, inc_reference, out, outputs, baseline_data=None):
    try:
        report = build_report(runs, baseline, inc_reference, baseline_data=baseline_data)
    except ValueError as exc:
        raise PairingError(str(exc)) from None
    _write(out, "auc.csv", report.auc_csv(), outputs)
    _write(out, "compare.csv", report.compare_csv(), outputs)
    _write(out, "report.txt", report.to_text(), outputs)


def read_scores(path):
    """Runs from a ``scores.csv`` written by ``eval``."""
    groups = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            key = (rec["method"], rec["data"], rec["outcome"])
            groups.setdefault(key, ([], [], []))
            rows, labels, scores = groups[key]
            rows.append(int(rec["row"]))
            labels.append(int(rec["label"]))
            scores.append(float(rec["score"]))
    return {k: (np.array(r), np.array(lab), np.array(s)) for k, (r, lab, s) in groups.items()}


def cmd_report(cfg, out, threads):
    paths = _paths(cfg, "report.scores")
    baseline = _get(cfg, "report.baseline", str, "lasso")
    inc_ref = cfg.get("report.inc_reference")
    merged = {}
    for p in paths:
        try:
            found = read_scores(p)
        except OSError as exc:
            raise DataError(f"cannot read scores file {p}: {exc.strerror}") from None
        for key, val in found.items():
            if key in merged:
                raise PairingError(f"run {key} appears in more than one scores file")
            merged[key] = val
    test_rows = {}
    for (method, data, outcome), (rows, labels, _) in merged.items():
        ref = test_rows.setdefault((data, outcome), (rows, labels))
        if not (np.array_equal(ref[0], rows) and np.array_equal(ref[1], labels)):
            raise PairingError(f"unpaired test rows for data={data!r}, outcome={outcome!r}")
    runs = [Run(m, d, o, s, lab) for (m, d, o), (_, lab, s) in merged.items()]
    outputs = []
    _write_report(runs, baseline, inc_ref, out, outputs)
    return None, paths, outputs


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "eval": cmd_eval, "report": cmd_report}


def build_parser():
    parser = argparse.ArgumentParser(prog="stratlasso", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        if name in ("synth", "fit"):
            p.add_argument("--seed", type=int, help="override synth.seed / cv.seed")
        if name == "fit":
            p.add_argument("--model", choices=sorted(FITTERS), help="override model.kind")
            p.add_argument("--data-config", help="all | group:G | mix:G1,G2")
            p.add_argument("--alpha", type=float, help="fixed pretrained alpha")
        if name == "eval":
            p.add_argument("--allow-fallback", action="store_true",
                           help="score unknown groups with the overall model")
    return parser


def _overrides(args):
    o = {}
    if getattr(args, "seed", None) is not None:
        o["synth.seed" if args.command == "synth" else "cv.seed"] = args.seed
    if getattr(args, "model", None):
        o["model.kind"] = args.model
    if getattr(args, "data_config", None):
        o["data.config"] = args.data_config
    if getattr(args, "alpha", None) is not None:
        o["ptlasso.alpha"] = repr(args.alpha)
    if getattr(args, "allow_fallback", False):
        o["eval.allow_fallback"] = "true"
    return o


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg, digest = _load_config(args.command, args.config, _overrides(args))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        seed, inputs, outputs = COMMANDS[args.command](cfg, out, args.threads)
    except (MissingBaseline, PairingError) as exc:
        print(f"stratlasso {args.command}: {_message(exc)}", file=sys.stderr)
        return EXIT_PAIRING
    except InvalidConfig as exc:
        print(f"stratlasso {args.command}: config error: {_message(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, StratLassoError) as exc:
        print(f"stratlasso {args.command}: data error: {_message(exc)}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"stratlasso {args.command}: data error: {exc.filename}: {exc.strerror}",
              file=sys.stderr)
        return EXIT_DATA
    _write_manifest(out, args.command, digest, cfg, seed, inputs, outputs, started)
    print(f"stratlasso {args.command}: wrote {len(outputs)} file(s) to {out} "
          f"in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return EXIT_OK


def _message(exc):
    # KeyError subclasses repr their argument
    return exc.args[0] if exc.args else type(exc).__name__


if __name__ == "__main__":
    sys.exit(main())
