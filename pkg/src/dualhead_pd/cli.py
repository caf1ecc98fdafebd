"""Command-line entry point: synth | train | eval | ablate | export-embeddings | gradcheck.

Exit codes: 0 success, 1 validation/config error, 2 runtime/numeric error.
"""

import argparse
import logging
import os
import sys
import time

from . import data, evaluation, gradcheck, synth, training
from .config import RunConfig
from .features import InputError
from .model import AblationSwitches, CheckpointError, LanguageLookupError, TaskType, load_checkpoint
from .numerics import ConfigurationError, DimensionError, NumericError

log = logging.getLogger("dualhead_pd")

VALIDATION_ERRORS = (
    ConfigurationError,
    DimensionError,
    InputError,
    data.ManifestError,
    data.FormatError,
    CheckpointError,
    LanguageLookupError,
    evaluation.UsageError,
    training.UsageError,
    FileNotFoundError,
)


def _common(p, out_required=False):
    p.add_argument("--config", help="flat JSON config with dotted keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE", help="dotted-key overrides, e.g. model.r=8")


def _lang_map(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigurationError(f"--lang-map expects old=new, got {item!r}")
        old, new = item.split("=", 1)
        out[old] = new
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="dualhead-pd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bilingual corpus")
    _common(p, out_required=True)

    p = sub.add_parser("train", help="train a model on a corpus")
    _common(p, out_required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", help="split name (train/val/test) or manifest path")
    p.add_argument("--lang-map", action="append", metavar="OLD=NEW")

    p = sub.add_parser("ablate", help="single-component removal study")
    _common(p, out_required=True)
    p.add_argument("--components", default=",".join(AblationSwitches.COMPONENTS))
    p.add_argument("--split", default="test")

    p = sub.add_parser("export-embeddings", help="pooled embeddings + 2-D PCA projection")
    _common(p, out_required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--task", choices=["ddk", "speech", "all"], default="ddk")
    p.add_argument("--lang-map", action="append", metavar="OLD=NEW")

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--layers", help="comma-separated subset of " + ",".join(gradcheck.CHECKS))
    return parser


def _manifest(cfg, split):
    if os.path.exists(split) and split.endswith(".jsonl"):
        return split
    corpus = cfg["data.corpus"]
    if not corpus:
        raise ConfigurationError("data.corpus is not set (pass data.corpus=DIR)")
    key = {"train": "data.train", "val": "data.val", "test": "data.test"}.get(split)
    if key is None:
        raise ConfigurationError(f"unknown split {split!r}")
    path = os.path.join(corpus, cfg[key])
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    return path


def _load(cfg, objs, split, with_wavelet=True):
    return data.load_utterances(_manifest(cfg, split), objs["frame"], objs["wavelet"], with_wavelet)


def _resolve(args, out=None):
    cfg = RunConfig.resolve(args.config, args.overrides, args.seed)
    if out:
        os.makedirs(out, exist_ok=True)
        cfg.dump(os.path.join(out, "resolved_config.json"))
    return cfg, cfg.build()


def cmd_synth(args):
    cfg, objs = _resolve(args, args.out)
    splits = synth.generate(objs["synth"], args.out)
    for name, entries in splits.items():
        print(f"{name:>6}: {len(entries)} utterances")


def cmd_train(args):
    cfg, objs = _resolve(args, args.out)
    wavelet = objs["switches"].wavelet
    tr, va = _load(cfg, objs, "train", wavelet), _load(cfg, objs, "val", wavelet)
    result = training.train(
        tr, va, objs["model"], objs["train"], objs["contrastive"], objs["switches"], out_dir=args.out, log=log.info
    )
    print(f"best epoch {result.best_epoch}: validation macro-F1 {result.best_f1:.2f}")
    print(f"wrote {os.path.join(args.out, 'checkpoint.bin')} and history.tsv")


def cmd_eval(args):
    cfg, objs = _resolve(args, args.out)
    model, extra = load_checkpoint(args.checkpoint)
    utts = _load(cfg, objs, args.split, model.switches.wavelet)
    ev = evaluation.evaluate(model, utts, _lang_map(args.lang_map), cfg["eval.threshold"])
    rows = [("overall", ev.report)]
    rows += [(ds, evaluation.metrics(cm)) for ds, cm in sorted(ev.per_dataset.items())]
    rows += [(f"{ds}/{task}", evaluation.metrics(cm)) for (ds, task), cm in ev.cells.items()]
    if cfg["eval.speaker_vote"]:
        p, y = evaluation.speaker_vote(utts, ev.probabilities, cfg["eval.threshold"])
        rows.append(("speaker-vote", evaluation.metrics(evaluation.confusion(p, y))))
    print(evaluation.format_table(rows, title=f"split: {args.split}"))
    if args.out:
        evaluation.write_metrics(os.path.join(args.out, "metrics.txt"), ev)


def cmd_ablate(args):
    cfg, objs = _resolve(args, args.out)
    components = [c for c in args.components.split(",") if c]
    tr, va, te = (_load(cfg, objs, s) for s in ("train", "val", args.split))
    rows = training.ablate(
        tr, va, te, objs["model"], objs["train"], objs["contrastive"], components, objs["switches"], log=log.info
    )
    print(training.format_ablation(rows))
    training.write_ablation(os.path.join(args.out, "ablation.tsv"), rows)


def cmd_export(args):
    cfg, objs = _resolve(args, args.out)
    model, _ = load_checkpoint(args.checkpoint)
    utts = _load(cfg, objs, args.split, model.switches.wavelet)
    task = None if args.task == "all" else TaskType.parse(args.task)
    rows = evaluation.export_embeddings(model, utts, task, _lang_map(args.lang_map))
    path = os.path.join(args.out, "embeddings.csv")
    evaluation.write_embeddings_csv(path, rows)
    print(f"wrote {len(rows)} rows to {path}")


def cmd_gradcheck(args):
    layers = args.layers.split(",") if args.layers else None
    unknown = [l for l in layers or [] if l not in gradcheck.CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown layers {unknown}")
    start = time.time()
    results = gradcheck.run(args.seeds, layers)
    failed = False
    for name, err in results.items():
        ok = err < gradcheck.TOLERANCE
        failed |= not ok
        print(f"{name:<18} max_rel_err={err:.3e}  {'ok' if ok else 'FAIL'}")
    print(f"{args.seeds} seeds in {time.time() - start:.1f}s")
    return 2 if failed else 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "export-embeddings": cmd_export,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface as runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
