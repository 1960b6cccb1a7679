"""Bootstrap fuzzing run that harvests high-quality testcases for training."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .corpus import Corpus, ExecOutcome, QualityConfig, Testcase, evaluate_quality
from .fuzzer import Fuzzer, FuzzConfig, FuzzStats
from .targets.base import TargetSpec


@dataclass(frozen=True)
class CollectConfig:
    budget: float = 300.0
    max_corpus: int = 1000
    max_len: int = 512
    quality: QualityConfig = QualityConfig()


@dataclass
class CollectResult:
    corpus: Corpus
    stats: FuzzStats
    evaluated: int = 0
    accepted: int = 0
    flags: dict = field(default_factory=lambda: {"crash": 0, "high_coverage": 0, "new_path": 0, "divergent_path": 0})


class _Harvester:
    """``on_exec`` hook: keeps crashes and new-path inputs outright and a
    uniform reservoir sample of the remaining accepted inputs."""

    def __init__(self, cfg: CollectConfig, seed: int):
        self.cfg = cfg
        self.rng = random.Random(seed ^ 0x5EED)
        self.fuzzer: Fuzzer | None = None
        self.initial: list[tuple[Testcase, ExecOutcome]] = []
        self.priority: list[tuple[Testcase, ExecOutcome]] = []
        self.reservoir: list[tuple[Testcase, ExecOutcome]] = []
        self._seen: set[bytes] = set()
        self._others = 0
        self.evaluated = 0
        self.accepted = 0
        self.flags = {"crash": 0, "high_coverage": 0, "new_path": 0, "divergent_path": 0}

    def __call__(self, tc: Testcase, out: ExecOutcome, added: bool) -> None:
        gs = self.fuzzer.global_state
        if tc.provenance.kind == "initial":
            self.initial.append((tc, out))
            self._seen.add(tc.data)
            gs.record_outcome(out.coverage.nonzero)
            return
        verdict = evaluate_quality(tc, out, gs, self.cfg.quality)
        gs.record_outcome(out.coverage.nonzero)
        self.evaluated += 1
        if not verdict.accepted:
            return
        self.accepted += 1
        for name in self.flags:
            self.flags[name] += getattr(verdict, name)
        if len(tc.data) > self.cfg.max_len or tc.data in self._seen:
            return
        if verdict.crash or verdict.new_path:
            if len(self.priority) < self.cfg.max_corpus:
                self.priority.append((tc, out))
                self._seen.add(tc.data)
            return
        self._others += 1
        if len(self.reservoir) < self.cfg.max_corpus:
            self.reservoir.append((tc, out))
            self._seen.add(tc.data)
        else:
            j = self.rng.randrange(self._others)
            if j < self.cfg.max_corpus:
                self._seen.discard(self.reservoir[j][0].data)
                self.reservoir[j] = (tc, out)
                self._seen.add(tc.data)

    def corpus(self) -> Corpus:
        corpus = Corpus()
        for tc, out in self.initial:
            corpus.add(tc, out)
        for tc, out in self.priority + self.reservoir:
            if len(corpus) >= self.cfg.max_corpus:
                break
            corpus.add(tc, out)
        return corpus


def collect(
    target: TargetSpec,
    seeds,
    cfg: CollectConfig = CollectConfig(),
    fuzz_cfg: FuzzConfig | None = None,
) -> CollectResult:
    """Fuzz ``target`` from ``seeds`` and keep testcases passing the quality filter.

    The returned corpus always starts with the initial seeds.  When
    ``fuzz_cfg`` is omitted the run uses ``cfg.budget`` seconds.
    """
    if fuzz_cfg is None:
        fuzz_cfg = FuzzConfig(time_budget=cfg.budget)
    fuzz_cfg = replace(fuzz_cfg, max_len=min(fuzz_cfg.max_len, max(cfg.max_len, 1)))
    harvester = _Harvester(cfg, fuzz_cfg.seed)
    fuzzer = Fuzzer(target, seeds, fuzz_cfg, on_exec=harvester)
    harvester.fuzzer = fuzzer
    stats = fuzzer.run()
    if stats.executions == 0:
        corpus = Corpus(e.testcase for e in fuzzer.queue)
    else:
        corpus = harvester.corpus()
    return CollectResult(corpus, stats, harvester.evaluated, harvester.accepted, harvester.flags)
