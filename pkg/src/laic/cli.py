"""Command-line interface.

Subcommands: synth, ingest, run, score, ablate, verify, report. Exit codes:
0 success, 1 validation error, 2 runtime failure, 3 verification failure.

Determinism contract: before any numeric module is imported, the process pins
BLAS/OpenMP pools to one thread, so artifact bytes never depend on machine
parallelism. ``--threads`` caps the (currently single-worker) row-loop pool
and is recorded in the manifest; any value >= 1 produces identical bytes.

Only the standard library is imported at module level; numpy and the package
internals load lazily inside the command handlers, after the pinning.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

log = logging.getLogger("laic")

_BLAS_ENV = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


class CliError(ValueError):
    """Invalid arguments or inputs; maps to exit code 1."""


class VerificationFailure(RuntimeError):
    """A verify check did not meet tolerance; maps to exit code 3."""


def _pin_blas_threads() -> None:
    for var in _BLAS_ENV:
        os.environ[var] = "1"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); we want exit 1
        raise CliError(message)


# Hyperparameter defaults shared by run/score/ablate; config files may set the
# same keys, and explicit flags override the file.
_DEFAULTS = {
    "images": None,
    "texts": None,
    "k": None,
    "c": "auto",
    "tau": 12.5,
    "kappa": 0.006,
    "beta": 5,
    "epochs": 30,
    "lr": 1e-3,
    "batch": 2048,
    "seed": 0,
    "score_kind": "gradnorm",
    "loss": "ce",
    "threads": 1,
}

_COERCE = {
    "images": str,
    "texts": str,
    "k": int,
    "c": str,
    "tau": float,
    "kappa": float,
    "beta": int,
    "epochs": int,
    "lr": float,
    "batch": int,
    "seed": int,
    "score_kind": str,
    "loss": str,
    "threads": int,
}


def parse_config_file(path: Path) -> dict:
    """key=value lines; blank lines and full-line # comments are skipped.
    Unknown keys are rejected."""
    entries: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError(f"{path}: line {lineno}: expected key=value")
            key = key.strip()
            value = value.strip()
            if key not in _DEFAULTS:
                raise CliError(f"{path}: line {lineno}: unknown config key {key!r}")
            try:
                entries[key] = _COERCE[key](value)
            except ValueError:
                raise CliError(f"{path}: line {lineno}: bad value for {key}: {value!r}")
    return entries


def _merge_params(args: argparse.Namespace) -> dict:
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(parse_config_file(Path(args.config)))
    for key in _DEFAULTS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    return merged


def _validate_params(params: dict) -> dict:
    if params["k"] is None:
        raise CliError("missing required --k")
    if params["c"] not in ("auto", None):
        try:
            params["c"] = int(params["c"])
        except (TypeError, ValueError):
            raise CliError(f"--c must be an integer or 'auto', got {params['c']!r}")
    else:
        params["c"] = "auto"
    if params["beta"] < 1:
        raise CliError("beta must be >= 1")
    if params["tau"] <= 0:
        raise CliError("tau must be > 0")
    if params["kappa"] <= 0:
        raise CliError("kappa must be > 0")
    if params["threads"] < 1:
        raise CliError("threads must be >= 1")
    if params["score_kind"] not in ("gradnorm", "msp", "cosine"):
        raise CliError(f"unknown score kind {params['score_kind']!r}")
    if params["loss"] not in ("ce", "secu"):
        raise CliError(f"unknown loss {params['loss']!r}; choose ce or secu")
    if params["images"] is None or params["texts"] is None:
        raise CliError("missing required --images/--texts")
    return params


def _build_pipeline_config(params: dict):
    from .classifier import SECU, STANDARD_CE, TrainConfig
    from .pipeline import PipelineConfig

    seed = params["seed"]
    train = TrainConfig(
        temperature=params["tau"],
        epochs=params["epochs"],
        learning_rate=params["lr"],
        batch_size=params["batch"],
        seed=seed + 1,
        loss_variant=SECU if params["loss"] == "secu" else STANDARD_CE,
    )
    return PipelineConfig(
        k=params["k"],
        c=None if params["c"] == "auto" else params["c"],
        tau=params["tau"],
        kappa=params["kappa"],
        beta=params["beta"],
        score_kind=params["score_kind"],
        stage1_seed=seed,
        stage2_seed=seed + 2,
        train=train,
    )


def _write_manifest(out_dir: Path, command: str, params: dict, inputs: dict,
                    outputs: list[str], seeds: dict, started: float) -> None:
    from . import __version__

    doc = {
        "command": command,
        "version": __version__,
        "params": params,
        "inputs": inputs,
        "outputs": outputs,
        "seeds": seeds,
        "duration_s": round(time.monotonic() - started, 3),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_inputs(params: dict):
    from .featurestore import read_laic

    images, image_labels = read_laic(params["images"], role="image")
    texts, text_labels = read_laic(params["texts"], role="text")
    positivity = None
    if text_labels is not None:
        positivity = text_labels.labels >= 0
    return images, image_labels, texts, positivity


def _cmd_synth(args: argparse.Namespace) -> int:
    from .featurestore import HuberSynthConfig, generate_huber_dataset, write_laic

    started = time.monotonic()
    cfg = HuberSynthConfig(
        dim=args.dim, num_classes=args.classes, num_images=args.images,
        num_texts=args.texts, mixing=args.pi,
        concentration_pos=args.conc_pos, concentration_neg=args.conc_neg,
        decoy_prototypes=args.decoys, seed=args.seed,
    )
    data = generate_huber_dataset(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_laic(data.images, data.image_labels, out / "images.laic")
    write_laic(data.texts, data.text_labels, out / "texts.laic")
    log.info("synth: %d images, %d texts (%d positive) -> %s",
             data.images.rows, data.texts.rows, int(data.positivity.sum()), out)
    _write_manifest(out, "synth", dataclasses.asdict(cfg), {},
                    ["images.laic", "texts.laic"], {"seed": args.seed}, started)
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    from .featurestore import LabelVector, from_csv, l2_normalize, write_laic

    matrix = from_csv(args.csv, args.dim, role=args.role)
    if args.normalize:
        matrix = l2_normalize(matrix)
    labels = None
    if args.labels:
        import numpy as np
        values = [int(line) for line in Path(args.labels).read_text().split()]
        labels = LabelVector(np.asarray(values, dtype=np.int32))
    write_laic(matrix, labels, args.out)
    log.info("ingest: %d rows x %d dims -> %s", matrix.rows, matrix.dim, args.out)
    return 0


def _params_from_manifest(args: argparse.Namespace) -> dict:
    doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    if doc.get("command") not in ("run", "score"):
        raise CliError(f"manifest command {doc.get('command')!r} is not rerunnable")
    params = doc["params"]
    missing = set(_DEFAULTS) - set(params)
    if missing:
        raise CliError(f"manifest is missing keys: {sorted(missing)}")
    for key in ("images", "texts", "k", "c", "tau", "kappa", "beta", "epochs",
                "lr", "batch", "seed", "score_kind", "loss", "config"):
        explicit = getattr(args, key, None)
        if explicit is not None:
            raise CliError("flags other than --out/--threads cannot be combined "
                           "with --manifest")
    if args.threads is not None:
        params = dict(params)
        params["threads"] = args.threads
    return params


def _cmd_run(args: argparse.Namespace) -> int:
    from .pipeline import run_pipeline

    started = time.monotonic()
    if args.manifest:
        params = _validate_params(_params_from_manifest(args))
    else:
        params = _validate_params(_merge_params(args))
    cfg = _build_pipeline_config(params)
    images, truth, texts, positivity = _load_inputs(params)
    out = Path(args.out)
    log.info("run: %d images x %d dims, %d texts, k=%d c=%s",
             images.rows, images.dim, texts.rows, cfg.k, cfg.c or "auto")
    result = run_pipeline(images, texts, cfg, truth=truth, positivity=positivity,
                          out_dir=out, write_concat=args.emit_concat)
    outputs = ["scores.csv", "filter.json", "counterparts.laic",
               "assignments.csv", "report.json"]
    if args.emit_concat:
        outputs.append("concat.csv")
    _write_manifest(out, "run", params,
                    {"images": params["images"], "texts": params["texts"]},
                    outputs, result.report.seeds, started)
    if result.report.acc is not None:
        log.info("run: acc=%.4f (baseline %.4f) nmi=%.4f ari=%.4f",
                 result.report.acc, result.report.baseline_acc,
                 result.report.nmi, result.report.ari)
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    from .pipeline import run_stage1

    started = time.monotonic()
    params = _validate_params(_merge_params(args))
    cfg = _build_pipeline_config(params)
    images, _, texts, _ = _load_inputs(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage1 = run_stage1(images, texts, cfg)
    stage1.table.to_csv(out / "scores.csv")
    stage1.filt.to_json(out / "filter.json")
    log.info("score: %d nouns over %d pseudo-classes, %d selected",
             len(stage1.table), stage1.c, stage1.filt.union.size)
    _write_manifest(out, "score", params,
                    {"images": params["images"], "texts": params["texts"]},
                    ["scores.csv", "filter.json"],
                    {"stage1": cfg.stage1_seed, "train": cfg.train.seed}, started)
    return 0


_SWEEP_DEFAULTS = {
    "kappa": (0.002, 0.02, 10),
    "tau": (5.0, 100.0, 10),
    "beta": (1, 10, 10),
}


def _cmd_ablate(args: argparse.Namespace) -> int:
    from .pipeline import sweep

    started = time.monotonic()
    params = _validate_params(_merge_params(args))
    cfg = _build_pipeline_config(params)
    images, truth, texts, _ = _load_inputs(params)
    if truth is None:
        raise CliError("ablate needs ground-truth labels in the image file")

    lo, hi, steps = _SWEEP_DEFAULTS[args.param]
    lo = args.start if args.start is not None else lo
    hi = args.stop if args.stop is not None else hi
    steps = args.steps if args.steps is not None else steps
    if steps < 2 or hi <= lo:
        raise CliError("sweep needs steps >= 2 and stop > start")
    import numpy as np
    if args.param == "beta":
        values = sorted(set(int(round(v)) for v in np.linspace(lo, hi, steps)))
        if values[0] < 1:
            raise CliError("beta must be >= 1")
    else:
        values = [float(v) for v in np.linspace(lo, hi, steps)]

    rows = sweep(images, texts, cfg, args.param, values, truth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablate.csv", "w", encoding="utf-8") as fh:
        fh.write(f"{args.param},acc,nmi,ari\n")
        for row in rows:
            fh.write(f"{row['value']!r},{row['acc']!r},{row['nmi']!r},{row['ari']!r}\n")
    log.info("ablate: %s over %d values -> %s", args.param, len(values), out)
    _write_manifest(out, "ablate", {**params, "param": args.param,
                                    "values": [float(v) for v in values]},
                    {"images": params["images"], "texts": params["texts"]},
                    ["ablate.csv"], {"seed": params["seed"]}, started)
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    from .verify import run_all

    results = run_all(seed=args.seed, trials=args.trials)
    failed = False
    for res in results:
        print(res.line())
        failed = failed or not res.passed
    if failed:
        raise VerificationFailure("one or more checks failed")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.run) / "report.json"
    doc = json.loads(path.read_text(encoding="utf-8"))
    def fmt(x):
        return "n/a" if x is None else f"{x:.4f}"
    print(f"acc          {fmt(doc['acc'])}")
    print(f"baseline_acc {fmt(doc['baseline_acc'])}")
    print(f"nmi          {fmt(doc['nmi'])}")
    print(f"ari          {fmt(doc['ari'])}")
    print(f"precision    {fmt(doc['precision'])}")
    print(f"recall       {fmt(doc['recall'])}")
    errs = [v for v in doc["err_pos"].values() if v is not None]
    if errs:
        print(f"err_pos      mean {sum(errs) / len(errs):.4f} over {len(errs)} clusters")
    else:
        print("err_pos      n/a")
    return 0


def _add_common_flags(p: argparse.ArgumentParser, with_required: bool = True) -> None:
    p.add_argument("--images", type=str, default=None, help="image matrix (.laic)")
    p.add_argument("--texts", type=str, default=None, help="noun matrix (.laic)")
    p.add_argument("--k", type=int, default=None, help="target cluster count")
    p.add_argument("--c", type=str, default=None,
                   help="pseudo-class count or 'auto' (size rule)")
    p.add_argument("--tau", type=float, default=None, help="softmax temperature")
    p.add_argument("--kappa", type=float, default=None,
                   help="counterpart attention temperature")
    p.add_argument("--beta", type=int, default=None, help="nouns kept per cluster")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--score-kind", dest="score_kind", type=str, default=None,
                   choices=("gradnorm", "msp", "cosine"))
    p.add_argument("--loss", type=str, default=None, choices=("ce", "secu"))
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap; never changes results")
    p.add_argument("--config", type=str, default=None,
                   help="key=value config file; flags override it")
    p.add_argument("--out", type=str, required=with_required, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="laic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic contamination dataset")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--images", type=int, required=True)
    p.add_argument("--texts", type=int, required=True)
    p.add_argument("--pi", type=float, required=True, help="positive mixing weight")
    p.add_argument("--conc-pos", dest="conc_pos", type=float, required=True)
    p.add_argument("--conc-neg", dest="conc_neg", type=float, default=0.0)
    p.add_argument("--decoys", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="convert CSV rows to the binary format")
    p.add_argument("--csv", type=str, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--role", type=str, default="image", choices=("image", "text"))
    p.add_argument("--labels", type=str, default=None,
                   help="optional whitespace-separated integer labels")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("run", help="full pipeline")
    _add_common_flags(p)
    p.add_argument("--emit-concat", dest="emit_concat", action="store_true")
    p.add_argument("--manifest", type=str, default=None,
                   help="re-run from a previous manifest (only --out/--threads "
                        "may accompany this)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("score", help="stage 1 only: scores and filter")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("ablate", help="sweep kappa, tau or beta against metrics")
    _add_common_flags(p)
    p.add_argument("--param", type=str, required=True,
                   choices=("kappa", "tau", "beta"))
    p.add_argument("--start", type=float, default=None)
    p.add_argument("--stop", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("verify", help="run the numerical verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("report", help="pretty-print a run's report.json")
    p.add_argument("--run", type=str, required=True, help="run output directory")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    _pin_blas_threads()
    logging.basicConfig(level=logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except VerificationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CliError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
