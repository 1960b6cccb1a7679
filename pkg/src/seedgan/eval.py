"""Three-group fuzzing experiment (AFL, GAN-AFL, WGAN-AFL) and its report.

``run_experiment`` does, per target:

1. bootstrap-fuzz from the fixture seeds and harvest a training corpus;
2. train a GAN and a WGAN with the same ``GanSpec`` and ``TrainConfig``;
3. pick the best checkpoint of each by validity/diversity score and
   synthesize ``seeds_per_group`` seeds;
4. for every trial, fuzz each group with the same budget and fuzz seed.

Every (group, target, trial) cell ends up in the report, either with its
metrics or marked failed with the error message.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .collect import CollectConfig, collect
from .config import GROUPS, ModelConfig, RunConfig, SelectConfig
from .encoding import encode
from .fuzzer import FuzzAbort, FuzzConfig, FuzzStats, Fuzzer, TimelineSample, write_timeline_csv
from .gan import GeneratorScore, TrainConfig, TrainingLog, generate_seeds, select_generators, train_gan, train_wgan
from .targets import get_target

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("group", "target", "trial", "coverage_percent", "new_paths", "unique_crashes", "executions")
METRICS = ("coverage_percent", "new_paths", "unique_crashes")
_TRAINERS = {"GAN-AFL": ("gan", train_gan), "WGAN-AFL": ("wgan", train_wgan)}


@dataclass(frozen=True)
class ExperimentPlan:
    groups: tuple[str, ...] = GROUPS
    targets: tuple[str, ...] = ("cnk",)
    trials: int = 5
    budget: float = 600.0
    exec_budget: int | None = None
    bootstrap_budget: float = 300.0
    bootstrap_exec_budget: int | None = None
    seeds_per_group: int = 32
    seed_base: int = 0
    train: TrainConfig = TrainConfig()
    model: ModelConfig = ModelConfig()
    fuzz: FuzzConfig = FuzzConfig()
    collect: CollectConfig = CollectConfig()
    select: SelectConfig = SelectConfig()

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "targets", tuple(self.targets))
        bad = [g for g in self.groups if g not in GROUPS]
        if bad:
            raise ValueError(f"unknown group(s) {bad}")
        if not self.groups or not self.targets:
            raise ValueError("plan needs at least one group and one target")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.seeds_per_group < 1:
            raise ValueError("seeds_per_group must be >= 1")
        for t in self.targets:
            get_target(t)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> ExperimentPlan:
        p = cfg.plan
        return cls(
            groups=p.groups,
            targets=p.targets,
            trials=p.trials,
            budget=p.budget,
            exec_budget=p.exec_budget or None,
            bootstrap_budget=p.bootstrap_budget,
            bootstrap_exec_budget=p.bootstrap_exec_budget or None,
            seeds_per_group=p.seeds_per_group,
            seed_base=p.seed_base,
            train=cfg.gan,
            model=cfg.model,
            fuzz=cfg.fuzz,
            collect=replace(cfg.collect, quality=cfg.quality),
            select=cfg.select,
        )

    def trial_fuzz_config(self, trial: int) -> FuzzConfig:
        """Identical for every group within a trial."""
        return replace(self.fuzz, time_budget=self.budget, exec_budget=self.exec_budget, seed=self.seed_base + trial)

    def bootstrap_fuzz_config(self) -> FuzzConfig:
        return replace(
            self.fuzz,
            time_budget=self.bootstrap_budget,
            exec_budget=self.bootstrap_exec_budget,
            seed=self.seed_base,
        )

    def to_json(self) -> dict:
        return json.loads(json.dumps(asdict(self), default=list))


@dataclass
class Cell:
    group: str
    target: str
    trial: int
    ok: bool
    coverage_percent: float = 0.0
    new_paths: int = 0
    unique_crashes: int = 0
    executions: int = 0
    timeline: list[TimelineSample] = field(default_factory=list)
    error: str = ""

    @classmethod
    def from_stats(cls, group, target, trial, stats: FuzzStats) -> Cell:
        return cls(group, target, trial, True, stats.coverage_percent, stats.new_paths,
                   stats.unique_crashes, stats.executions, list(stats.timeline))

    @classmethod
    def failed(cls, group, target, trial, error: str) -> Cell:
        return cls(group, target, trial, False, error=error)


@dataclass(frozen=True)
class Aggregate:
    median: float
    iqr: float
    n: int

    @classmethod
    def of(cls, values) -> Aggregate:
        v = np.asarray(list(values), dtype=np.float64)
        if len(v) == 0:
            return cls(float("nan"), float("nan"), 0)
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        return cls(float(med), float(q3 - q1), len(v))


@dataclass
class GeneratorInfo:
    """What a generative group trained, which checkpoint won, and its seeds."""

    group: str
    target: str
    log: TrainingLog
    checkpoint_id: str = ""
    score: float = 0.0
    acceptance: float = 0.0
    distinct: float = 0.0
    seeds: list[bytes] = field(default_factory=list)
    error: str = ""


@dataclass
class BootstrapInfo:
    target: str
    corpus_size: int
    maxlen: int
    executions: int
    evaluated: int
    accepted: int


@dataclass
class Report:
    plan: ExperimentPlan
    cells: list[Cell] = field(default_factory=list)
    generators: list[GeneratorInfo] = field(default_factory=list)
    bootstraps: list[BootstrapInfo] = field(default_factory=list)

    def cell(self, group: str, target: str, trial: int) -> Cell:
        for c in self.cells:
            if (c.group, c.target, c.trial) == (group, target, trial):
                return c
        raise KeyError((group, target, trial))

    def aggregate(self, group: str, target: str, metric: str) -> Aggregate:
        """Median/IQR of ``metric`` over the trials that completed."""
        return Aggregate.of(getattr(c, metric) for c in self.cells if c.ok and c.group == group and c.target == target)

    def generator(self, group: str, target: str) -> GeneratorInfo | None:
        for g in self.generators:
            if (g.group, g.target) == (group, target):
                return g
        return None

    def failed_cells(self) -> list[Cell]:
        return [c for c in self.cells if not c.ok]


def _bootstrap(plan: ExperimentPlan, target) -> tuple[BootstrapInfo, object]:
    seeds = target.baseline_seeds(plan.seeds_per_group, plan.seed_base)
    res = collect(target, seeds, plan.collect, plan.bootstrap_fuzz_config())
    enc = encode(res.corpus, hard_cap=plan.collect.max_len)
    info = BootstrapInfo(target.name, len(res.corpus), enc.maxlen, res.stats.executions, res.evaluated, res.accepted)
    log.info("bootstrap %s: %d testcases, maxlen %d", target.name, len(res.corpus), enc.maxlen)
    return info, enc


def _train_group(plan: ExperimentPlan, group: str, target, enc) -> GeneratorInfo:
    kind, trainer = _TRAINERS[group]
    spec = plan.model.spec_for(enc.maxlen)
    checkpoints, tlog = trainer(enc, spec, plan.train)
    sel = plan.select
    ranked: list[GeneratorScore] = select_generators(
        checkpoints, target.validity_oracle, n=sel.samples,
        weights=(sel.validity_weight, sel.diversity_weight), seed=plan.seed_base,
    )
    best = ranked[0]
    seeds = [tc.data for tc in generate_seeds(best.checkpoint, plan.seeds_per_group, seed=plan.seed_base)]
    log.info("%s/%s: picked %s (score %.3f)", group, target.name, best.checkpoint.id, best.score)
    return GeneratorInfo(group, target.name, tlog, best.checkpoint.id, best.score, best.acceptance, best.distinct, seeds)


def run_experiment(plan: ExperimentPlan) -> Report:
    report = Report(plan)
    for tname in plan.targets:
        target = get_target(tname)
        group_seeds: dict[str, list[bytes] | None] = {}
        group_error: dict[str, str] = {}
        if "AFL" in plan.groups:
            group_seeds["AFL"] = target.baseline_seeds(plan.seeds_per_group, plan.seed_base)
        generative = [g for g in plan.groups if g in _TRAINERS]
        enc = None
        if generative:
            try:
                info, enc = _bootstrap(plan, target)
                report.bootstraps.append(info)
            except Exception as exc:  # recorded, experiment continues
                log.exception("bootstrap failed on %s", tname)
                for g in generative:
                    group_error[g] = f"bootstrap failed: {exc}"
        for g in generative:
            if g in group_error:
                continue
            try:
                gi = _train_group(plan, g, target, enc)
                report.generators.append(gi)
                group_seeds[g] = gi.seeds
            except Exception as exc:
                log.exception("training %s on %s failed", g, tname)
                group_error[g] = f"training failed: {exc}"
                report.generators.append(GeneratorInfo(g, tname, TrainingLog(_TRAINERS[g][0]), error=str(exc)))
        for trial in range(plan.trials):
            fcfg = plan.trial_fuzz_config(trial)
            for g in plan.groups:
                if g in group_error:
                    report.cells.append(Cell.failed(g, tname, trial, group_error[g]))
                    continue
                try:
                    stats = Fuzzer(target, group_seeds[g], fcfg).run()
                    report.cells.append(Cell.from_stats(g, tname, trial, stats))
                except (FuzzAbort, ValueError) as exc:
                    report.cells.append(Cell.failed(g, tname, trial, str(exc)))
                log.info("%s/%s trial %d done", g, tname, trial)
    return report


# --- report output ---------------------------------------------------------------


def write_summary_csv(report: Report, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for c in report.cells:
            if c.ok:
                w.writerow([c.group, c.target, c.trial, f"{c.coverage_percent:.4f}", c.new_paths, c.unique_crashes, c.executions])
            else:
                w.writerow([c.group, c.target, c.trial, "failed", "", "", ""])


def summary_markdown(report: Report) -> str:
    """Rows per group and metric, one column per target (median [IQR])."""
    targets = report.plan.targets
    lines = [
        "| Fuzzer | Metrics | " + " | ".join(targets) + " |",
        "|---|---|" + "---|" * len(targets),
    ]
    labels = {"coverage_percent": "Code Coverage", "new_paths": "New Paths", "unique_crashes": "Crashes"}
    for g in report.plan.groups:
        for i, m in enumerate(METRICS):
            vals = []
            for t in targets:
                a = report.aggregate(g, t, m)
                if a.n == 0:
                    vals.append("failed")
                elif m == "coverage_percent":
                    vals.append(f"{a.median:.1f}% [{a.iqr:.1f}]")
                else:
                    vals.append(f"{a.median:g} [{a.iqr:g}]")
            lines.append(f"| {g if i == 0 else ''} | {labels[m]} | " + " | ".join(vals) + " |")
    lines.append("")
    lines.append("Cells show the median over trials with the interquartile range in brackets.")
    failed = report.failed_cells()
    if failed:
        lines.append("")
        lines.append("Failed cells:")
        for c in failed:
            lines.append(f"- {c.group} / {c.target} / trial {c.trial}: {c.error}")
    return "\n".join(lines) + "\n"


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "seedgan"
    return plt


def _save_svg(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_coverage(report: Report, target: str, path) -> None:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(7, 4))
    by_exec = report.plan.exec_budget is not None
    colors = dict(zip(GROUPS, ("tab:gray", "tab:blue", "tab:red")))
    for g in report.plan.groups:
        first = True
        for c in report.cells:
            if c.group != g or c.target != target or not c.ok or not c.timeline:
                continue
            x = [s.executions if by_exec else s.t_seconds for s in c.timeline]
            y = [s.coverage_percent for s in c.timeline]
            ax.step(x, y, where="post", color=colors[g], alpha=0.7, label=g if first else None)
            first = False
    ax.set_xlabel("executions" if by_exec else "seconds")
    ax.set_ylabel("edge coverage (%)")
    ax.set_title(f"coverage over time: {target}")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="lower right")
    _save_svg(fig, path)
    plt.close(fig)


def plot_losses(info: GeneratorInfo, path) -> None:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(7, 4))
    epochs = [r.epoch for r in info.log.records]
    ax.plot(epochs, [r.loss_d for r in info.log.records], label="discriminator / critic")
    ax.plot(epochs, [r.loss_g for r in info.log.records], label="generator")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"{info.group} training loss: {info.target}")
    ax.legend()
    _save_svg(fig, path)
    plt.close(fig)


def report_json(report: Report) -> dict:
    return {
        "plan": report.plan.to_json(),
        "bootstraps": [asdict(b) for b in report.bootstraps],
        "generators": [
            {
                "group": g.group, "target": g.target, "checkpoint": g.checkpoint_id, "score": g.score,
                "acceptance": g.acceptance, "distinct": g.distinct, "epochs": len(g.log.records),
                "critic_updates": g.log.critic_updates, "generator_updates": g.log.generator_updates,
                "train_seconds": g.log.total_seconds, "error": g.error,
            }
            for g in report.generators
        ],
        "aggregates": [
            {"group": g, "target": t, "metric": m, **asdict(report.aggregate(g, t, m))}
            for t in report.plan.targets for g in report.plan.groups for m in METRICS
        ],
        "failed": [{"group": c.group, "target": c.target, "trial": c.trial, "error": c.error} for c in report.failed_cells()],
    }


def emit_report(report: Report, outdir) -> list[Path]:
    """Write summary.csv, summary.md, report.json, timelines/ and SVG plots."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "summary.csv", out / "summary.md", out / "report.json"]
    write_summary_csv(report, written[0])
    written[1].write_text(summary_markdown(report))
    written[2].write_text(json.dumps(report_json(report), indent=2, sort_keys=True, default=str) + "\n")
    tdir = out / "timelines"
    tdir.mkdir(exist_ok=True)
    for c in report.cells:
        if c.ok:
            p = tdir / f"{c.target}_{c.group}_trial{c.trial}.csv"
            write_timeline_csv(c.timeline, p)
            written.append(p)
    for t in report.plan.targets:
        if any(c.target == t for c in report.cells):
            p = out / f"coverage_{t}.svg"
            plot_coverage(report, t, p)
            written.append(p)
    for g in report.generators:
        if g.log.records:
            p = out / f"loss_{g.group}_{g.target}.svg"
            plot_losses(g, p)
            g.log.write_csv(out / f"loss_{g.group}_{g.target}.csv")
            written += [p, out / f"loss_{g.group}_{g.target}.csv"]
        if g.seeds:
            sdir = out / "seeds" / f"{g.group}_{g.target}"
            sdir.mkdir(parents=True, exist_ok=True)
            for i, s in enumerate(g.seeds):
                (sdir / f"id:{i:06d},gen:{g.checkpoint_id}").write_bytes(s)
    return written
