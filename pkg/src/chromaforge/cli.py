"""Command-line interface: ``python3 -m chromaforge <command> ...``.

Every option may also come from a JSON ``--config`` file keyed by option
name; explicit flags win over the file, and ``CHROMAFORGE_SEED`` supplies the
seed when neither sets it. Each command writes a ``manifest.json`` holding the
fully resolved configuration, from which ``rerun`` reproduces the outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, attacks, classifier, datagen, experiments, gradcheck, lp_baselines, metrics
from .colorfilter import STYLE_PRESETS
from .tensorcore import file_sha256, load_image, save_image

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
SEED_ENV = "CHROMAFORGE_SEED"
ATTACK_METHODS = ("ace", "random", "fgsm", "bim", "cw", "ace-style", "ace-semantic")
TRANSFER_METHODS = ("ace", "random", "fgsm", "bim", "cw")

COMMON_DEFAULTS = {"seed": 0, "jobs": 1}
DATA_DEFAULTS = {"images": "synthetic", "data_seed": 0, "num_classes": None, "samples_per_class": 200}
ACE_DEFAULTS = {
    "K": 64, "lam": 5.0, "kappa": None, "max_iters": 500, "lr": 0.01, "patience": 50,
    "loss": "cw", "projection": "euclidean", "shared_channels": False, "rs_project": True,
}
LP_DEFAULTS = {"epsilon": 2.0, "alpha": None, "iterations": 10, "cw_search_steps": 3, "cw_inner_iters": 100}
DEFAULTS = {
    "train": {**COMMON_DEFAULTS, **DATA_DEFAULTS, "arch": "cnn-small", "epochs": 8, "lr": 1e-3, "batch_size": 32,
              "data": "synthetic"},
    "attack": {**COMMON_DEFAULTS, **DATA_DEFAULTS, **ACE_DEFAULTS, **LP_DEFAULTS, "method": "ace", "limit": None,
               "target": None, "mask": None, "weights": None, "l0_spatial": False, "l0_threshold": 1e-9,
               "image_format": "png"},
    "sweep": {**COMMON_DEFAULTS, **DATA_DEFAULTS, **ACE_DEFAULTS, "param": "lambda", "values": None,
              "repeats": 1, "limit": 100},
    "compare-search": {**COMMON_DEFAULTS, **DATA_DEFAULTS, **ACE_DEFAULTS, "budgets": "50,100,500",
                       "rs_budgets": None, "limit": 100},
    "evaluate": {**COMMON_DEFAULTS, **DATA_DEFAULTS, **ACE_DEFAULTS, **LP_DEFAULTS, "method": "ace",
                 "models": None, "names": None, "limit": 100},
    "gradcheck": {**COMMON_DEFAULTS, "module": "all", "trials": 50, "tolerance": gradcheck.TOLERANCE},
    "export-data": {**COMMON_DEFAULTS, **DATA_DEFAULTS, "texture_noise": 0.04},
}
PATH_KEYS = ("model", "models", "images", "target", "mask", "weights", "data")


class UsageError(Exception):
    pass


# -- argument parsing -------------------------------------------------------


def _add(p, *flags, **kw):
    kw.setdefault("default", None)
    p.add_argument(*flags, **kw)


def _common(p, out_required=True):
    _add(p, "--config", help="JSON file of option values; flags take precedence")
    _add(p, "--seed", type=int, help=f"global seed (fallback: ${SEED_ENV}, then 0)")
    _add(p, "--jobs", type=int, help="worker processes for per-image attacks")
    _add(p, "--out", required=out_required, help="output directory")


def _data(p):
    _add(p, "--images", help="'synthetic' (generated holdout split), a directory with labels.csv, or binary batches")
    _add(p, "--data-seed", type=int, help="seed of the synthetic dataset")
    _add(p, "--num-classes", type=int, help="classes in synthetic data / binary batches")
    _add(p, "--samples-per-class", type=int, help="synthetic samples per class")


def _ace(p):
    _add(p, "--K", dest="K", type=int, help="filter pieces per channel (default 64)")
    _add(p, "--lambda", dest="lam", type=float, help="balance factor (default 5)")
    _add(p, "--kappa", type=float, help="margin loss confidence (default 0; 40 for cw)")
    _add(p, "--max-iters", type=int, help="iteration budget (default 500)")
    _add(p, "--lr", type=float, help="Adam step size (default 0.01)")
    _add(p, "--patience", type=int, help="early-stop patience after success (default 50)")
    _add(p, "--loss", choices=("cw", "ce"))
    _add(p, "--projection", choices=("euclidean", "clamp"), help="simplex projection after each step")
    _add(p, "--shared-channels", action=argparse.BooleanOptionalAction)
    _add(p, "--rs-project", action=argparse.BooleanOptionalAction, help="normalize random-search samples")


def _lp(p):
    _add(p, "--epsilon", type=float, help="L-inf bound in /255 units (default 2)")
    _add(p, "--alpha", type=float, help="BIM step in /255 units (default epsilon/5)")
    _add(p, "--iterations", type=int, help="BIM steps (default 10)")
    _add(p, "--cw-search-steps", type=int)
    _add(p, "--cw-inner-iters", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chromaforge", description="Adversarial color-filter attacks and baselines.")
    parser.add_argument("--version", action="version", version=f"chromaforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a reference classifier")
    _common(p)
    _add(p, "--arch", choices=("mlp-small", "cnn-small"))
    _add(p, "--data", help="'synthetic' or a directory/file of binary batches")
    _add(p, "--data-seed", type=int)
    _add(p, "--num-classes", type=int)
    _add(p, "--samples-per-class", type=int)
    _add(p, "--epochs", type=int)
    _add(p, "--lr", type=float)
    _add(p, "--batch-size", type=int)

    p = sub.add_parser("attack", help="attack a set of images")
    _common(p)
    _add(p, "--method", choices=ATTACK_METHODS)
    _add(p, "--model", required=True)
    _data(p)
    _add(p, "--limit", type=int, help="attack only the first N images")
    _ace(p)
    _lp(p)
    _add(p, "--target", help="style target: an image file or preset:NAME")
    _add(p, "--mask", help="region-index mask (P5 PGM or grayscale PNG)")
    _add(p, "--weights", help="JSON list of region weights (default uniform)")
    _add(p, "--l0-spatial", action=argparse.BooleanOptionalAction, help="count L0 over pixels, not channels")
    _add(p, "--l0-threshold", type=float)
    _add(p, "--image-format", choices=("png", "ppm"))

    p = sub.add_parser("sweep", help="success rate against K or lambda")
    _common(p)
    _add(p, "--model", required=True)
    _data(p)
    _add(p, "--limit", type=int, help="number of correctly classified images (default 100)")
    _add(p, "--param", choices=("K", "lambda"))
    _add(p, "--values", help="comma-separated values")
    _add(p, "--repeats", type=int)
    _ace(p)

    p = sub.add_parser("compare-search", help="ACE against random search per iteration budget")
    _common(p)
    _add(p, "--model", required=True)
    _data(p)
    _add(p, "--limit", type=int)
    _add(p, "--budgets", help="comma-separated budgets (ACE, and random search unless --rs-budgets)")
    _add(p, "--rs-budgets", help="comma-separated budgets for random search")
    _ace(p)

    p = sub.add_parser("evaluate", help="white-box and transfer success matrix")
    _common(p)
    _add(p, "--models", required=True, help="comma-separated model files")
    _add(p, "--names", help="comma-separated display names")
    _add(p, "--method", choices=TRANSFER_METHODS)
    _data(p)
    _add(p, "--limit", type=int)
    _ace(p)
    _lp(p)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every analytic gradient")
    _common(p, out_required=False)
    _add(p, "--module", choices=("filter", "classifier", "all"))
    _add(p, "--trials", type=int)
    _add(p, "--tolerance", type=float)

    p = sub.add_parser("export-data", help="write the synthetic dataset as PPM files")
    _common(p)
    _data(p)
    _add(p, "--texture-noise", type=float)

    p = sub.add_parser("rerun", help="re-execute a command from its manifest")
    _add(p, "--manifest", required=True)
    _add(p, "--out", required=True, help="new output directory")
    _add(p, "--check", action="store_true", default=False, help="compare outputs with the manifest's hashes")
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge flags, config file, environment seed and defaults into one dict."""
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    from_file = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            from_file = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
        if "lambda" in from_file:
            from_file["lam"] = from_file.pop("lambda")
        unknown = set(from_file) - set(flags)
        if unknown:
            raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
    cfg = dict(DEFAULTS[command])
    if os.environ.get(SEED_ENV):
        try:
            cfg["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer") from None
    cfg.update({k: v for k, v in from_file.items() if v is not None})
    cfg.update({k: v for k, v in flags.items() if v is not None})
    for key in PATH_KEYS:
        cfg[key] = _absolute(cfg.get(key))
    cfg.pop("out", None)
    return cfg


def _absolute(value):
    if value is None:
        return None
    if isinstance(value, list):
        return [_absolute(v) for v in value]
    text = str(value)
    if "," in text:
        return ",".join(_absolute(v) for v in text.split(","))
    if text == "synthetic" or text.startswith("preset:"):
        return text
    return os.path.abspath(text)


def _int_list(text, name) -> list[int]:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"--{name} must be comma-separated integers") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    return vals


def _float_list(text, name) -> list[float]:
    if text is None:
        raise UsageError(f"--{name} is required")
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"--{name} must be comma-separated numbers") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    return vals


# -- shared helpers -----------------------------------------------------------


def _synthetic_spec(cfg) -> datagen.SyntheticSpec:
    kwargs = {"seed": cfg["data_seed"], "samples_per_class": cfg["samples_per_class"]}
    if cfg.get("num_classes"):
        kwargs["num_classes"] = cfg["num_classes"]
    if "texture_noise" in cfg:
        kwargs["texture_noise"] = cfg["texture_noise"]
    return datagen.SyntheticSpec(**kwargs)


def _load_items(cfg, source=None) -> list:
    source = source or cfg["images"]
    if source == "synthetic":
        return datagen.generate_synthetic(_synthetic_spec(cfg))[1]
    path = Path(source)
    if path.is_dir() and (path / "labels.csv").exists():
        return datagen.load_labeled_dir(path)
    return datagen.load_binary_batches(path, cfg.get("num_classes") or 10)


def _attack_config(cfg, method="ace") -> attacks.AttackConfig:
    kappa = cfg["kappa"] if cfg["kappa"] is not None else 0.0
    return attacks.AttackConfig(
        K=cfg["K"], lam=cfg["lam"], kappa=kappa, max_iters=cfg["max_iters"], learning_rate=cfg["lr"],
        early_stop_patience=cfg["patience"], seed=cfg["seed"], loss=cfg["loss"],
        shared_channels=cfg["shared_channels"], rs_project=cfg["rs_project"], projection=cfg["projection"],
    )


def _lp_config(cfg) -> lp_baselines.LpConfig:
    eps = cfg["epsilon"] / 255.0
    alpha = None if cfg["alpha"] is None else cfg["alpha"] / 255.0
    kappa = cfg["kappa"] if cfg["kappa"] is not None else 40.0
    return lp_baselines.LpConfig(
        epsilon=eps, alpha=alpha, iterations=cfg["iterations"], kappa=kappa,
        cw_search_steps=cfg["cw_search_steps"], cw_inner_iters=cfg["cw_inner_iters"], seed=cfg["seed"],
    )


def _method(cfg, method):
    """(function, config) pair for a batch run of ``method``."""
    if method in ("ace", "random", "ace-style", "ace-semantic"):
        fns = {"ace": attacks.ace_attack, "random": attacks.random_search_attack,
               "ace-style": attacks.style_target_attack, "ace-semantic": attacks.semantic_mask_attack}
        return fns[method], _attack_config(cfg)
    return lp_baselines.METHODS[method], _lp_config(cfg)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k, "")) for k in columns})
    path.write_text(buf.getvalue())


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _prepare_out(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: dict, argv: list[str] | None) -> None:
    inputs = {}
    for key in PATH_KEYS:
        value = cfg.get(key)
        if not value or value == "synthetic" or str(value).startswith("preset:"):
            continue
        for p in str(value).split(","):
            if os.path.isfile(p):
                inputs[p] = file_sha256(p)
    outputs = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            outputs[p.relative_to(out).as_posix()] = file_sha256(p)
    doc = {
        "tool": "chromaforge",
        "version": __version__,
        "command": command,
        "argv": list(argv) if argv is not None else None,
        "config": cfg,
        "seeds": {k: cfg[k] for k in ("seed", "data_seed") if k in cfg},
        "inputs": inputs,
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(_dumps(doc))


# -- commands ---------------------------------------------------------------


def cmd_train(cfg, out: Path) -> int:
    if cfg["epochs"] < 0:
        raise UsageError("--epochs must be >= 0")
    if cfg["data"] == "synthetic":
        spec = _synthetic_spec(cfg)
        train_set, holdout = datagen.generate_synthetic(spec)
        m = spec.num_classes
    else:
        items = datagen.load_binary_batches(cfg["data"], cfg.get("num_classes") or 10)
        train_set = [it for i, it in enumerate(items) if i % 5 != 4]
        holdout = [it for i, it in enumerate(items) if i % 5 == 4]
        m = cfg.get("num_classes") or 10
    size = tuple(train_set[0].image.shape[:2])
    model = classifier.build(cfg["arch"], m, seed=cfg["seed"], image_size=size)

    def log(row):
        print(f"epoch {row['epoch']}: loss {row['loss']:.4f} train {row['train_acc']:.4f} "
              f"holdout {row['holdout_acc']:.4f}", flush=True)

    model, history = classifier.train(model, train_set, cfg["epochs"], learning_rate=cfg["lr"], seed=cfg["seed"],
                                      holdout=holdout, batch_size=cfg["batch_size"], log=log)
    classifier.save_model(model, out / "model.json")
    _write_csv(out / "accuracy.csv", history, ["epoch", "loss", "train_acc", "holdout_acc"])
    acc = classifier.accuracy(model, holdout)
    print(f"holdout accuracy {100.0 * acc:.2f}%")
    return EXIT_OK


def _style_target(cfg, shape):
    spec = cfg["target"]
    if spec.startswith("preset:"):
        name = spec.split(":", 1)[1]
        if name not in STYLE_PRESETS:
            raise UsageError(f"unknown preset {name!r}; choose from {sorted(STYLE_PRESETS)}")
        return None, name
    target = load_image(spec)
    if target.shape != shape:
        raise UsageError(f"target shape {target.shape} does not match images {shape}")
    return target, None


def cmd_attack(cfg, out: Path) -> int:
    method = cfg["method"]
    if method == "ace-style" and not cfg["target"]:
        raise UsageError("--method ace-style requires --target")
    if method == "ace-semantic" and not cfg["mask"]:
        raise UsageError("--method ace-semantic requires --mask")
    model = classifier.load_model(cfg["model"])
    items = _load_items(cfg)
    if cfg["limit"] is not None:
        items = items[: cfg["limit"]]
    if not items:
        raise UsageError("no images to attack")
    fn, run_cfg = _method(cfg, method)
    kwargs = {}
    if method == "ace-style":
        target, preset = _style_target(cfg, items[0].image.shape)
        if preset is not None:
            fn, kwargs = attacks.style_preset_attack, {"preset": preset}
        else:
            kwargs = {"target": target}
    elif method == "ace-semantic":
        regions = attacks.SemanticMask.load(cfg["mask"], cfg["weights"]) if cfg["weights"] else None
        if regions is None:
            from .tensorcore import load_mask

            idx = load_mask(cfg["mask"])
            n = int(idx.max()) + 1
            regions = attacks.SemanticMask(idx, np.full(n, 1.0 / n))
        kwargs = {"mask": regions}
    results = attacks.attack_many(fn, model, items, run_cfg, jobs=cfg["jobs"], **kwargs)

    (out / "results").mkdir(exist_ok=True)
    (out / "adversarial").mkdir(exist_ok=True)
    ext = cfg["image_format"]
    for i, (item, res) in enumerate(zip(items, results)):
        doc = res.to_json(item.image)
        doc["norms"] = metrics.norms_dict(metrics.perturbation_norms(
            item.image, res.adversarial, cfg["l0_threshold"], cfg["l0_spatial"]))
        doc["index"] = i
        (out / "results" / f"img_{i:05d}.json").write_text(_dumps(doc))
        save_image(res.adversarial, out / "adversarial" / f"img_{i:05d}.{ext}")
    kept = [r for r in results if r.status != attacks.MISCLASSIFIED]
    if kept:
        row = metrics.summarize(results, [it.image for it in items], method=method,
                                model_src=Path(cfg["model"]).name, threshold=cfg["l0_threshold"],
                                spatial=cfg["l0_spatial"])
        rows = [row]
    else:
        rows = []
    report = metrics.report(rows)
    (out / "summary.csv").write_text(report.to_csv())
    (out / "summary.json").write_text(report.to_json() + "\n")
    for row in rows:
        print(f"{method}: success {row['success_pct']:.2f}% over {row['n']} images")
    if not rows:
        print("every image was already misclassified; nothing attacked")
    return EXIT_OK


def _eval_items(cfg, model):
    items = _load_items(cfg)
    return experiments.correct_subset(model, items, cfg["limit"])


SWEEP_COLUMNS = ["param", "value", "repeat", "n", "success_pct", "mean_iters", "mean_penalty", "mean_final_penalty"]


def cmd_sweep(cfg, out: Path) -> int:
    values = _float_list(cfg["values"], "values")
    if cfg["param"] == "K":
        if any(v != int(v) or v < 1 for v in values):
            raise UsageError("K values must be positive integers")
        values = [int(v) for v in values]
    if cfg["repeats"] < 1:
        raise UsageError("--repeats must be >= 1")
    model = classifier.load_model(cfg["model"])
    items = _eval_items(cfg, model)
    rows = experiments.sweep(model, items, cfg["param"], values, _attack_config(cfg), cfg["repeats"], cfg["jobs"])
    _write_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
    for row in rows:
        print(f"{row['param']}={row['value']} repeat {row['repeat']}: success {row['success_pct']:.2f}% "
              f"penalty {row['mean_penalty']:.5f}")
    return EXIT_OK


def cmd_compare_search(cfg, out: Path) -> int:
    budgets = _int_list(cfg["budgets"], "budgets")
    rs_budgets = _int_list(cfg["rs_budgets"], "rs-budgets") if cfg["rs_budgets"] else budgets
    if any(b < 0 for b in budgets + rs_budgets):
        raise UsageError("budgets must be non-negative")
    model = classifier.load_model(cfg["model"])
    items = _eval_items(cfg, model)
    base = _attack_config(cfg)
    rows = experiments.compare_search(model, items, budgets, rs_budgets, base, cfg["jobs"])
    _write_csv(out / "compare.csv", rows, ["method", "K", "budget", "n", "success_pct"])
    for row in rows:
        print(f"{row['method']} budget {row['budget']}: {row['success_pct']:.2f}%")
    return EXIT_OK


def _default_names(paths) -> list[str]:
    stems = [Path(p).stem for p in paths]
    if len(set(stems)) == len(set(paths)):
        return stems
    return [f"{Path(p).parent.name}/{Path(p).stem}" for p in paths]


def cmd_evaluate(cfg, out: Path) -> int:
    paths = [p for p in str(cfg["models"]).split(",") if p]
    if not paths:
        raise UsageError("--models is empty")
    names = cfg["names"].split(",") if cfg["names"] else _default_names(paths)
    if len(names) != len(paths):
        raise UsageError("--names must match --models")
    loaded = {}
    models = []
    for p in paths:
        # the same file twice is the same model, sharing one set of adversarial images
        if p not in loaded:
            loaded[p] = classifier.load_model(p)
        models.append(loaded[p])
    items = _load_items(cfg)
    if cfg["limit"] is not None:
        items = items[: cfg["limit"]]
    fn, run_cfg = _method(cfg, cfg["method"])
    matrix = experiments.transfer(models, names, items, fn, run_cfg, cfg["jobs"])
    rows = matrix.rows(cfg["method"])
    _write_csv(out / "transfer.csv", rows, metrics.CSV_COLUMNS)
    (out / "transfer.json").write_text(_dumps({
        "models": matrix.models, "success_pct": matrix.success, "agreement_counts": matrix.agreement_counts,
        "method": cfg["method"],
    }))
    for i, src in enumerate(matrix.models):
        cells = ["undefined" if v is None else f"{v:.2f}" for v in matrix.success[i]]
        print(f"{src}: " + " ".join(cells))
    return EXIT_OK


def cmd_gradcheck(cfg, out: Path | None) -> int:
    if cfg["trials"] < 1:
        raise UsageError("--trials must be >= 1")
    results = gradcheck.run(cfg["module"], cfg["trials"], cfg["seed"], cfg["tolerance"])
    rows = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: max relative error {r.max_rel_error:.3e} over {r.trials} trials "
              f"(tolerance {r.tolerance:g})")
        rows.append({"check": r.name, "trials": r.trials, "max_rel_error": r.max_rel_error,
                     "tolerance": r.tolerance, "passed": r.passed})
    if out is not None:
        _write_csv(out / "gradcheck.csv", rows, ["check", "trials", "max_rel_error", "tolerance", "passed"])
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def cmd_export_data(cfg, out: Path) -> int:
    train_set, holdout = datagen.generate_synthetic(_synthetic_spec(cfg))
    datagen.export_dataset(train_set, out / "train")
    datagen.export_dataset(holdout, out / "holdout")
    print(f"wrote {len(train_set)} training and {len(holdout)} holdout images")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "sweep": cmd_sweep,
    "compare-search": cmd_compare_search,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "export-data": cmd_export_data,
}


def execute(command: str, cfg: dict, out, argv=None) -> int:
    """Run one command with a resolved configuration and write its manifest."""
    out_dir = _prepare_out(out) if out is not None else None
    code = COMMANDS[command](cfg, out_dir)
    if out_dir is not None:
        _write_manifest(out_dir, command, cfg, argv)
    return code


def cmd_rerun(manifest_path, out, check: bool) -> int:
    with open(manifest_path) as fh:
        doc = json.load(fh)
    command = doc.get("command")
    if command not in COMMANDS:
        raise UsageError(f"manifest names unknown command {command!r}")
    cfg = {**DEFAULTS[command], **doc["config"]}
    code = execute(command, cfg, out, doc.get("argv"))
    if check:
        with open(Path(out) / "manifest.json") as fh:
            fresh = json.load(fh)["outputs"]
        if fresh != doc["outputs"]:
            diff = sorted(k for k in set(fresh) | set(doc["outputs"]) if fresh.get(k) != doc["outputs"].get(k))
            print(f"outputs differ from manifest: {diff}", file=sys.stderr)
            return EXIT_FAILURE
        print(f"all {len(fresh)} outputs match the manifest")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.command == "rerun":
            return cmd_rerun(args.manifest, args.out, args.check)
        cfg = resolve(args.command, args)
        if cfg.get("jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return execute(args.command, cfg, args.out, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"chromaforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"chromaforge: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
