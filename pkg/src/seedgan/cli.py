"""``seedgan`` command line: collect, train, generate, fuzz, eval.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shutil
import sys
from pathlib import Path

from .collect import collect
from .config import ConfigError, RunConfig, dump_config, load_config
from .corpus import CorpusError, load_dir, load_seed_dir
from .encoding import encode
from .eval import ExperimentPlan, emit_report, run_experiment
from .fuzzer import FuzzAbort, Fuzzer
from .gan import Checkpoint, TrainingDiverged, generate_seeds, save_checkpoints, select_generators, train_gan, train_wgan
from .targets import get_target, list_targets

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Output:
    """Human-readable lines, or one JSON object per line with ``--json``."""

    def __init__(self, as_json: bool, stream=None):
        self.as_json = as_json
        self.stream = stream

    def emit(self, event: str, text: str, **fields) -> None:
        if self.as_json:
            print(json.dumps({"event": event, "message": text, **fields}, sort_keys=True, default=str),
                  file=self.stream or sys.stdout)
        else:
            # human-readable errors go to stderr so stdout stays clean for pipes
            default = sys.stderr if event == "error" else sys.stdout
            print(text, file=self.stream or default)


def _global_flags(parser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=d, help="rng seed for fuzzing, training and generation")
    parser.add_argument("--json", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="print machine-readable JSON lines")
    parser.add_argument("--config", default=d, help="config file of section.key = value lines")
    parser.add_argument("--set", action="append", default=argparse.SUPPRESS if suppress else [],
                        metavar="SECTION.KEY=VALUE", help="override one config value (repeatable)")
    parser.add_argument("--overwrite", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="replace an existing output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="seedgan", description="GAN/WGAN seed generation for coverage-guided fuzzing.")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        return sp

    sp = cmd("targets", "list bundled targets")

    sp = cmd("collect", "bootstrap-fuzz a target and keep high-quality testcases")
    sp.add_argument("--target", required=True)
    sp.add_argument("--budget", type=float, help="seconds (default: collect.budget)")
    sp.add_argument("--exec-budget", type=int, help="stop after this many executions (deterministic)")
    sp.add_argument("--seeds", help="initial seed directory (default: the target's valid fixtures)")
    sp.add_argument("--out", required=True)

    sp = cmd("train", "train a generator on a corpus directory")
    sp.add_argument("--corpus", required=True)
    kind = sp.add_mutually_exclusive_group(required=True)
    kind.add_argument("--wgan", dest="kind", action="store_const", const="wgan")
    kind.add_argument("--gan", dest="kind", action="store_const", const="gan")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("generate", "synthesize seeds from a checkpoint")
    sp.add_argument("--checkpoint", required=True, help="checkpoint file, or a directory to pick the best from")
    sp.add_argument("--target", help="validity oracle used to rank a checkpoint directory")
    sp.add_argument("-n", type=int, default=32)
    sp.add_argument("--out", required=True)

    sp = cmd("fuzz", "run the coverage-guided fuzzer")
    sp.add_argument("--target", required=True)
    sp.add_argument("--seeds", required=True)
    sp.add_argument("--budget", type=float, help="seconds (default: fuzz.time_budget)")
    sp.add_argument("--exec-budget", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("eval", "run the AFL / GAN-AFL / WGAN-AFL experiment and write a report")
    sp.add_argument("--plan", required=True, help="plan file (same format as --config)")
    sp.add_argument("--out", required=True)
    return p


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg,
            fuzz=dataclasses.replace(cfg.fuzz, seed=args.seed),
            gan=dataclasses.replace(cfg.gan, seed=args.seed),
            plan=dataclasses.replace(cfg.plan, seed_base=args.seed),
        )
    return cfg


def _target(name):
    try:
        return get_target(name)
    except KeyError:
        raise UsageError(f"unknown target {name!r}; choose from {', '.join(t.name for t in list_targets())}") from None


def _outdir(path, overwrite: bool) -> Path:
    out = Path(path)
    if out.exists():
        if not out.is_dir():
            raise UsageError(f"{out} exists and is not a directory")
        if any(out.iterdir()):
            if not overwrite:
                raise UsageError(f"{out} is not empty; pass --overwrite to replace it")
            shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fuzz_cfg(cfg: RunConfig, budget, exec_budget, default_budget):
    kw = {"time_budget": default_budget if budget is None else budget}
    if exec_budget is not None:
        kw["exec_budget"] = exec_budget
    if (budget is not None and budget < 0) or (exec_budget is not None and exec_budget < 0):
        raise UsageError("budgets must be non-negative")
    return dataclasses.replace(cfg.fuzz, **kw)


def cmd_targets(args, cfg, out: Output) -> int:
    for t in list_targets():
        out.emit("target", f"{t.name}\t{t.total_edges} edges\t{t.description}", name=t.name, total_edges=t.total_edges)
    return EXIT_OK


def cmd_collect(args, cfg, out: Output) -> int:
    target = _target(args.target)
    seeds = load_seed_dir(args.seeds) if args.seeds else target.baseline_seeds(32, cfg.fuzz.seed)
    fcfg = _fuzz_cfg(cfg, args.budget, args.exec_budget, cfg.collect.budget)
    outdir = _outdir(args.out, args.overwrite)
    res = collect(target, seeds, dataclasses.replace(cfg.collect, quality=cfg.quality), fcfg)
    res.corpus.save_dir(outdir)
    out.emit("collect", f"kept {len(res.corpus)} testcases ({res.accepted}/{res.evaluated} passed the filter, "
             f"{res.stats.executions} executions) -> {outdir / 'queue'}",
             corpus=len(res.corpus), accepted=res.accepted, evaluated=res.evaluated,
             executions=res.stats.executions, flags=res.flags, out=str(outdir))
    return EXIT_OK


def cmd_train(args, cfg, out: Output) -> int:
    if args.epochs is not None:
        if args.epochs < 1:
            raise UsageError("--epochs must be >= 1")
        cfg = dataclasses.replace(cfg, gan=dataclasses.replace(cfg.gan, epochs=args.epochs))
    corpus = load_dir(args.corpus, max_len=cfg.collect.max_len)
    enc = encode(corpus, hard_cap=cfg.collect.max_len)
    spec = cfg.model.spec_for(enc.maxlen)
    outdir = _outdir(args.out, args.overwrite)
    trainer = train_wgan if args.kind == "wgan" else train_gan
    checkpoints, tlog = trainer(enc, spec, cfg.gan)
    paths = save_checkpoints(checkpoints, outdir)
    tlog.write_csv(outdir / "train_log.csv")
    (outdir / "config.txt").write_text(dump_config(cfg))
    last = tlog.records[-1]
    out.emit("train", f"{args.kind}: {len(tlog.records)} epochs on {len(corpus)} testcases (maxlen {enc.maxlen}), "
             f"{len(paths)} checkpoints, final loss_g={last.loss_g:.5f} loss_d={last.loss_d:.5f} -> {outdir}",
             kind=args.kind, epochs=len(tlog.records), corpus=len(corpus), maxlen=enc.maxlen,
             checkpoints=[p.name for p in paths], loss_g=last.loss_g, loss_d=last.loss_d, out=str(outdir))
    return EXIT_OK


def cmd_generate(args, cfg, out: Output) -> int:
    if args.n < 1:
        raise UsageError("-n must be >= 1")
    src = Path(args.checkpoint)
    if src.is_dir():
        files = sorted(src.glob("*.ckpt"))
        if not files:
            raise UsageError(f"no .ckpt files in {src}")
        if args.target is None:
            raise UsageError("--target is required to pick from a checkpoint directory")
        target = _target(args.target)
        sel = cfg.select
        ranked = select_generators([Checkpoint.load(f) for f in files], target.validity_oracle,
                                   n=sel.samples, weights=(sel.validity_weight, sel.diversity_weight), seed=cfg.fuzz.seed)
        ckpt = ranked[0].checkpoint
    elif src.is_file():
        ckpt = Checkpoint.load(src)
    else:
        raise UsageError(f"checkpoint {src} does not exist")
    outdir = _outdir(args.out, args.overwrite)
    seeds = generate_seeds(ckpt, args.n, seed=cfg.fuzz.seed)
    for i, tc in enumerate(seeds):
        (outdir / f"id:{i:06d},{tc.provenance.tag()}").write_bytes(tc.data)
    out.emit("generate", f"wrote {len(seeds)} seeds from {ckpt.id} -> {outdir}",
             n=len(seeds), checkpoint=ckpt.id, out=str(outdir))
    return EXIT_OK


def cmd_fuzz(args, cfg, out: Output) -> int:
    target = _target(args.target)
    seeds = load_seed_dir(args.seeds)
    fcfg = _fuzz_cfg(cfg, args.budget, args.exec_budget, cfg.fuzz.time_budget)
    outdir = _outdir(args.out, args.overwrite)
    fuzzer = Fuzzer(target, seeds, fcfg)
    stats = fuzzer.run()
    fuzzer.save(outdir)
    out.emit("fuzz", f"{stats.executions} executions, coverage {stats.coverage_percent:.2f}%, "
             f"{stats.new_paths} new paths, {stats.unique_crashes} unique crashes -> {outdir}",
             executions=stats.executions, coverage_percent=stats.coverage_percent, new_paths=stats.new_paths,
             unique_crashes=stats.unique_crashes, total_crashes=stats.total_crashes, out=str(outdir))
    return EXIT_OK


def cmd_eval(args, cfg, out: Output) -> int:
    cfg = load_config(args.plan, args.set, base=cfg)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, plan=dataclasses.replace(cfg.plan, seed_base=args.seed))
    try:
        plan = ExperimentPlan.from_config(cfg)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    outdir = _outdir(args.out, args.overwrite)
    report = run_experiment(plan)
    emit_report(report, outdir)
    for g in plan.groups:
        for t in plan.targets:
            cov, paths, crashes = (report.aggregate(g, t, m) for m in ("coverage_percent", "new_paths", "unique_crashes"))
            out.emit("cell", f"{g:9s} {t:5s} coverage {cov.median:6.2f}%  new paths {paths.median:g}  "
                     f"crashes {crashes.median:g}  ({cov.n}/{plan.trials} trials ok)",
                     group=g, target=t, coverage_percent=cov.median, new_paths=paths.median,
                     unique_crashes=crashes.median, trials_ok=cov.n)
    out.emit("eval", f"report -> {outdir}", out=str(outdir), failed=len(report.failed_cells()))
    return EXIT_OK


COMMANDS = {
    "targets": cmd_targets,
    "collect": cmd_collect,
    "train": cmd_train,
    "generate": cmd_generate,
    "fuzz": cmd_fuzz,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    out = Output(False)
    try:
        args = parser.parse_args(argv)
        out = Output(args.json)
        if args.command is None:
            raise UsageError("seedgan: a command is required (try --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _load_cfg(args)
        return COMMANDS[args.command](args, cfg, out)
    except (UsageError, ConfigError) as exc:
        out.emit("error", f"error: {exc}", code=EXIT_USAGE)
        return EXIT_USAGE
    except (CorpusError, FuzzAbort, TrainingDiverged, ValueError, OSError) as exc:
        out.emit("error", f"error: {exc}", code=EXIT_RUNTIME)
        return EXIT_RUNTIME
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
