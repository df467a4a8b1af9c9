"""Command line entry point: ``eventqa <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import DatasetError, load_dataset, save_dataset, split_dataset
from .synth import synth_generate
from .training import (
    RunConfig,
    RunConfigError,
    evaluate,
    fewshot_sweep,
    load_run,
    project_embeddings,
    role_distances,
    train,
)

log = logging.getLogger("eventqa")

# CLI flag -> RunConfig field, for flags that override the config file
_OVERRIDES = ("seed", "setting", "tagging", "epochs", "lr", "batch_size", "accum_steps")
_ABLATIONS = ("no_prefix", "no_tc", "no_cl", "no_transm")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--setting", choices=("generative", "extractive"))
    p.add_argument("--tagging", choices=("io", "bio"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--accum-steps", type=int)
    for name in _ABLATIONS:
        p.add_argument("--" + name.replace("_", "-"), action="store_true")
    p.add_argument("--out", required=True, help="output directory")


def _config(args: argparse.Namespace) -> RunConfig:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    for name in _OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    for name in _ABLATIONS:
        if getattr(args, name, False):
            base[name] = True
    if getattr(args, "train", None):
        base["train_path"] = args.train
    if getattr(args, "eval_data", None):
        base["eval_path"] = args.eval_data
    base["out_dir"] = args.out
    cfg = RunConfig.from_json(base)
    cfg.validate()
    return cfg


def _dataset(path: str | None, what: str):
    if not path:
        raise RunConfigError(f"no {what} dataset given")
    return load_dataset(path)


def cmd_synth(args) -> None:
    data = synth_generate(args.n, seed=args.seed or 0, n_distractors=args.distractors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.heldout:
        tr, ho = split_dataset(data, args.heldout, seed=args.seed or 0)
        save_dataset(tr, out / "train.json")
        save_dataset(ho, out / "heldout.json")
        print(f"wrote {len(tr)} train and {len(ho)} held-out instances to {out}")
    else:
        save_dataset(data, out / "synth.json")
        print(f"wrote {len(data)} instances to {out / 'synth.json'}")


def cmd_train(args) -> None:
    cfg = _config(args)
    data = _dataset(cfg.train_path, "training")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(json.dumps(cfg.to_json(), indent=2))
    res = train(cfg, data, out_dir=out)
    print(json.dumps({"steps": len(res.log), "final_loss": res.final_loss, "skipped": res.skipped,
                      "seconds": round(res.seconds, 1), "checkpoint": str(out / "model.npz")}))


def cmd_eval(args) -> None:
    model, vocab, cfg = load_run(args.checkpoint)
    if args.setting and args.setting != model.config.setting:
        raise RunConfigError(f"checkpoint is {model.config.setting}, not {args.setting}")
    cfg.no_prefix = cfg.no_prefix or args.no_prefix
    data = _dataset(args.data, "evaluation")
    report = evaluate(model, vocab, data, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.dumps())
    print(json.dumps({"overall": report.overall, "type_accuracy": report.type_accuracy}))


def cmd_sweep(args) -> None:
    cfg = _config(args)
    rows = fewshot_sweep(cfg, _dataset(cfg.train_path, "training"), _dataset(cfg.eval_path, "evaluation"),
                         args.sizes, out_dir=args.out)
    out = Path(args.out)
    for r in rows:
        (out / f"metrics_{r.size}.json").write_text(r.report.dumps())
        print(json.dumps(r.to_json()))


def cmd_project(args) -> None:
    model, vocab, cfg = load_run(args.checkpoint)
    data = _dataset(args.data, "sample")
    if args.sample:
        pick = np.random.default_rng(args.seed or 0).permutation(len(data))[:args.sample]
        data = [data[i] for i in sorted(pick)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"projection_{args.epoch_tag}.tsv"
    rows = project_embeddings(model, vocab, data, cfg, args.epoch_tag, path)
    qa, qo = role_distances(rows)
    print(json.dumps({"rows": len(rows), "path": str(path), "dist_question_answer": qa,
                      "dist_question_other": qo}))


def cmd_check(args) -> None:
    from .checks import run_all

    results = run_all(quick=args.quick)
    summary, ok = {}, True
    for name, reports in results.items():
        passed = int(sum(bool(r.passed) for r in reports))
        ok &= passed == len(reports)
        summary[name] = {"passed": passed, "total": len(reports),
                         "failures": [r.as_record() for r in reports if not r.passed][:5]}
        print(f"{'PASS' if passed == len(reports) else 'FAIL'} {name}: {passed}/{len(reports)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "checks.json").write_text(json.dumps(summary, indent=2))
    if not ok:
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventqa", description="Event-centric QA toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, default=2300)
    p.add_argument("--heldout", type=int, default=0, help="also split off this many held-out instances")
    p.add_argument("--distractors", type=int, default=4)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", help="training dataset JSON")
    _run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--setting", choices=("generative", "extractive"))
    p.add_argument("--no-prefix", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="few-shot training-size sweep")
    p.add_argument("--train")
    p.add_argument("--eval-data")
    p.add_argument("--sizes", type=int, nargs="+", default=[0, 100, 500, 2000])
    _run_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("project", help="2-D projection of event embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", type=int, default=50)
    p.add_argument("--epoch-tag", default="final")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("check", help="run the numerical property suites")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (RunConfigError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
