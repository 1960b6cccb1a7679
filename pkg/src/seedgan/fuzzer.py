"""Coverage-guided fuzzing loop over in-process targets."""

from __future__ import annotations

import csv
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .corpus import Corpus, ExecOutcome, Provenance, Status, Testcase
from .coverage import DEFAULT_MAP_SIZE, CoverageMap, GlobalCoverageState
from .mutate import Havoc, Splice, deterministic_stages, mutate
from .targets.base import ParseError, PlantedFault, TargetHang, TargetSpec, Tracer

log = logging.getLogger(__name__)

TIMELINE_COLUMNS = ("t_seconds", "executions", "queue_len", "unique_crashes", "coverage_percent")


class FuzzAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class FuzzConfig:
    """Fuzzing knobs.

    Setting ``exec_budget`` switches to determinism mode: the run stops
    after that many executions, the timeline is sampled every
    ``sample_every_execs`` executions and wall-clock timeouts are ignored
    (the tracer's step limit still catches runaway inputs).
    """

    time_budget: float | None = 60.0
    exec_budget: int | None = None
    timeout: float = 0.05
    map_size: int = DEFAULT_MAP_SIZE
    havoc_stack_pow2: tuple[int, int] = (1, 6)
    havoc_rounds: int = 256
    splice_rounds: int = 16
    skip_nonfavored: float = 0.95
    deterministic: bool = True
    det_max_len: int = 1024
    max_len: int = 4096
    sample_every: float = 1.0
    sample_every_execs: int = 1000
    seed: int = 0
    stop_on_crash: bool = False
    check_invariants: bool = False

    @property
    def determinism_mode(self) -> bool:
        return self.exec_budget is not None

    def __post_init__(self):
        if self.exec_budget is None and (self.time_budget is None or self.time_budget < 0):
            raise ValueError("need a non-negative time_budget or an exec_budget")
        if self.exec_budget is not None and self.exec_budget < 0:
            raise ValueError("exec_budget must be non-negative")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        lo, hi = self.havoc_stack_pow2
        if not 0 <= lo <= hi:
            raise ValueError("bad havoc stacking range")


@dataclass(frozen=True)
class TimelineSample:
    t_seconds: float = field(compare=False)
    executions: int
    queue_len: int
    unique_crashes: int
    coverage_percent: float


@dataclass
class FuzzStats:
    executions: int = 0
    total_crashes: int = 0
    unique_crashes: int = 0
    timeouts: int = 0
    new_paths: int = 0
    queue_len: int = 0
    covered_edges: int = 0
    total_edges: int = 1
    timeline: list[TimelineSample] = field(default_factory=list)
    elapsed: float = field(default=0.0, compare=False)

    @property
    def coverage_percent(self) -> float:
        return 100.0 * self.covered_edges / self.total_edges

    def sample(self, t: float) -> TimelineSample:
        return TimelineSample(t, self.executions, self.queue_len, self.unique_crashes, self.coverage_percent)

    def write_timeline(self, path) -> None:
        write_timeline_csv(self.timeline, path)


def write_timeline_csv(samples, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMELINE_COLUMNS)
        for s in samples:
            w.writerow([f"{s.t_seconds:.3f}", s.executions, s.queue_len, s.unique_crashes, f"{s.coverage_percent:.4f}"])


@dataclass
class QueueEntry:
    testcase: Testcase
    outcome: ExecOutcome
    favored: bool = False
    times_fuzzed: int = 0
    det_done: bool = False


def execute(target: TargetSpec, data: bytes, cfg: FuzzConfig = FuzzConfig()) -> ExecOutcome:
    """Run ``target`` once on ``data`` with a fresh coverage map."""
    tracer = Tracer(target.total_edges)
    status, signal = Status.OK, None
    start = time.perf_counter()
    try:
        target.run(bytes(data), tracer)
    except ParseError:
        pass
    except PlantedFault as exc:
        status, signal = Status.CRASH, exc.bug_id
    except TargetHang:
        status = Status.TIMEOUT
    except Exception as exc:  # noqa: BLE001 - any other target fault is a crash too
        status, signal = Status.CRASH, type(exc).__name__
    if status is Status.OK and not cfg.determinism_mode and time.perf_counter() - start > cfg.timeout:
        status = Status.TIMEOUT
    return ExecOutcome(status, CoverageMap.from_hits(tracer.hits, cfg.map_size), 0, signal)


def has_new_coverage(out: ExecOutcome, global_state: GlobalCoverageState) -> bool:
    """True iff a slot's bucket class exceeds the best recorded for it.

    Sets ``out.new_edge_count`` (slots never hit before) and folds the
    outcome into ``global_state`` when it is new.
    """
    cov = out.coverage
    if cov.size != global_state.size:
        raise ValueError(f"coverage map size {cov.size} != global map size {global_state.size}")
    if not cov.nonzero:
        out.new_edge_count = 0
        return False
    seen = global_state.classes[cov.slots]
    classes = cov.classes
    out.new_edge_count = int(np.count_nonzero(seen == 0))
    better = classes > seen
    if not better.any():
        return False
    idx = cov.slots[better]
    global_state.classes[idx] = classes[better]
    return True


class Fuzzer:
    """One fuzzing campaign: queue, global coverage, crashes and stats.

    ``on_exec(testcase, outcome, is_new)`` is called after every execution;
    the bootstrap collector hooks in through it.
    """

    def __init__(
        self,
        target: TargetSpec,
        seeds,
        cfg: FuzzConfig = FuzzConfig(),
        on_exec: Callable[[Testcase, ExecOutcome, bool], None] | None = None,
    ):
        seeds = [bytes(s) for s in seeds]
        if not seeds:
            raise ValueError("need at least one seed")
        self.target = target
        self.cfg = cfg
        self.on_exec = on_exec
        self.rng = random.Random(cfg.seed)
        self.global_state = GlobalCoverageState(cfg.map_size)
        self.stats = FuzzStats(total_edges=target.total_edges)
        self.queue: list[QueueEntry] = []
        self.crashes = Corpus()
        self.hangs = Corpus()
        self.crash_hashes: set[int] = set()
        self._seeds = [s[: cfg.max_len] for s in seeds if s]
        self._top_rated: dict[int, QueueEntry] = {}
        self._favored_dirty = False
        self._next_id = 0
        self._start = 0.0
        self._next_sample = 0.0
        self._done = False

    # --- budget and bookkeeping -------------------------------------------------

    def _elapsed(self) -> float:
        return time.perf_counter() - self._start

    def _exhausted(self) -> bool:
        if self._done:
            return True
        if self.cfg.determinism_mode:
            return self.stats.executions >= self.cfg.exec_budget
        return self._elapsed() >= self.cfg.time_budget

    def _new_id(self) -> str:
        ident = f"{self._next_id:06d}"
        self._next_id += 1
        return ident

    def _maybe_sample(self) -> None:
        s = self.stats
        if self.cfg.determinism_mode:
            if s.executions >= self._next_sample:
                s.timeline.append(s.sample(self._elapsed()))
                self._next_sample += self.cfg.sample_every_execs
        else:
            t = self._elapsed()
            if t >= self._next_sample:
                s.timeline.append(s.sample(t))
                self._next_sample = t + self.cfg.sample_every

    # --- execution ---------------------------------------------------------------

    def _run(self, data: bytes, parent: QueueEntry | None) -> bool:
        """Execute one input; returns True when it was added to the queue."""
        cfg = self.cfg
        out = execute(self.target, data, cfg)
        s = self.stats
        s.executions += 1
        prov = Provenance.initial() if parent is None else Provenance.mutated(parent.testcase.id)
        added = False
        tc = None
        if out.status is Status.CRASH:
            s.total_crashes += 1
            tc = Testcase(data, id=self._new_id(), provenance=prov, created_at=s.executions)
            if out.path_hash not in self.crash_hashes:
                self.crash_hashes.add(out.path_hash)
                self.crashes.add(tc, out)
                s.unique_crashes = len(self.crash_hashes)
                if cfg.stop_on_crash:
                    self._done = True
            # crash maps stay out of global coverage; only the count is needed
            seen = self.global_state.classes[out.coverage.slots]
            out.new_edge_count = int(np.count_nonzero(seen == 0))
        elif out.status is Status.TIMEOUT:
            s.timeouts += 1
            tc = Testcase(data, id=self._new_id(), provenance=prov, created_at=s.executions)
            self.hangs.add(tc, out)
        else:
            before = self.global_state.classes.copy() if cfg.check_invariants else None
            if has_new_coverage(out, self.global_state):
                tc = Testcase(data, id=self._new_id(), provenance=prov, created_at=s.executions)
                self._add_entry(tc, out)
                if parent is not None:
                    s.new_paths += 1
                added = True
                if cfg.check_invariants:
                    assert np.all(self.global_state.classes >= before), "global coverage decreased"
                    assert np.any(self.global_state.classes > before), "queue entry without new coverage"
            elif cfg.check_invariants:
                assert np.array_equal(self.global_state.classes, before)
        if cfg.check_invariants:
            assert s.unique_crashes <= s.total_crashes
        if self.on_exec is not None:
            if tc is None:
                tc = Testcase(data, id=f"x{s.executions:08d}", provenance=prov, created_at=s.executions)
            self.on_exec(tc, out, added)
        s.covered_edges = self.global_state.covered
        s.queue_len = len(self.queue)
        self._maybe_sample()
        return added

    def _add_entry(self, tc: Testcase, out: ExecOutcome) -> None:
        entry = QueueEntry(tc, out)
        self.queue.append(entry)
        self.global_state.entry_hashes[tc.id] = out.path_hash
        if self.global_state.baseline_hash is None:
            self.global_state.baseline_hash = out.path_hash
        size = len(tc.data)
        for slot in out.coverage.slots.tolist():
            cur = self._top_rated.get(slot)
            if cur is None or size < len(cur.testcase.data):
                self._top_rated[slot] = entry
        self._favored_dirty = True

    def _cull(self) -> None:
        """Greedy favored set: smallest entry per edge, covering every edge once."""
        for e in self.queue:
            e.favored = False
        covered: set[int] = set()
        for slot in sorted(self._top_rated):
            if slot in covered:
                continue
            entry = self._top_rated[slot]
            entry.favored = True
            covered.update(entry.outcome.coverage.slots.tolist())
        self._favored_dirty = False

    # --- stages ------------------------------------------------------------------

    def _fuzz_entry(self, entry: QueueEntry) -> None:
        cfg = self.cfg
        data = entry.testcase.data
        if cfg.deterministic and not entry.det_done and len(data) <= cfg.det_max_len:
            for stage in deterministic_stages(len(data)):
                if self._exhausted():
                    return
                self._run(mutate(data, stage), entry)
            entry.det_done = True
        havoc = Havoc(cfg.havoc_stack_pow2)
        for _ in range(cfg.havoc_rounds):
            if self._exhausted():
                return
            self._run(mutate(data, havoc, self.rng, cfg.max_len), entry)
        if len(self.queue) > 1:
            for _ in range(cfg.splice_rounds):
                if self._exhausted():
                    return
                partner = self.rng.choice(self.queue)
                if partner is entry:
                    continue
                stage = Splice(partner.testcase.data, cfg.havoc_stack_pow2)
                self._run(mutate(data, stage, self.rng, cfg.max_len), entry)
        entry.times_fuzzed += 1

    def run(self) -> FuzzStats:
        self._start = time.perf_counter()
        self._next_sample = 0.0
        cfg = self.cfg
        for data in self._seeds:
            if self._exhausted():
                break
            out = execute(self.target, data, cfg)
            self.stats.executions += 1
            tc = Testcase(data, id=self._new_id(), provenance=Provenance.initial(), created_at=self.stats.executions)
            if out.status is Status.OK:
                has_new_coverage(out, self.global_state)
                self._add_entry(tc, out)
            elif out.status is Status.CRASH:
                self.stats.total_crashes += 1
                if out.path_hash not in self.crash_hashes:
                    self.crash_hashes.add(out.path_hash)
                    self.crashes.add(tc, out)
                    self.stats.unique_crashes = len(self.crash_hashes)
            else:
                self.stats.timeouts += 1
                self.hangs.add(tc, out)
            if self.on_exec is not None:
                self.on_exec(tc, out, out.status is Status.OK)
            self.stats.covered_edges = self.global_state.covered
            self.stats.queue_len = len(self.queue)
            self._maybe_sample()

        if self.stats.executions == 0:
            # zero budget: nothing ran, the queue is just the seeds
            self.queue = [
                QueueEntry(Testcase(d, id=self._new_id()), ExecOutcome(Status.OK, CoverageMap(cfg.map_size)))
                for d in self._seeds
            ]
            self.stats.queue_len = len(self.queue)
            return self._finish()
        if not self.queue:
            if self._exhausted():
                return self._finish()
            if self.stats.timeouts == len(self._seeds):
                raise FuzzAbort("all seeds timed out")
            raise FuzzAbort("no seed executed cleanly (all crash or time out)")

        cursor = 0
        while not self._exhausted():
            if self._favored_dirty:
                self._cull()
            if cursor >= len(self.queue):
                cursor = 0
            entry = self.queue[cursor]
            cursor += 1
            if not entry.favored and self.rng.random() < cfg.skip_nonfavored:
                continue
            self._fuzz_entry(entry)
        return self._finish()

    def _finish(self) -> FuzzStats:
        s = self.stats
        s.elapsed = self._elapsed()
        s.covered_edges = self.global_state.covered
        s.queue_len = len(self.queue)
        s.timeline.append(s.sample(s.elapsed))
        return s

    def queue_corpus(self) -> Corpus:
        corpus = Corpus()
        for e in self.queue:
            corpus.add(e.testcase, e.outcome)
        return corpus

    def save(self, outdir) -> None:
        """Write the queue and crashes in AFL layout plus ``fuzzer_stats.csv``."""
        root = Path(outdir)
        self.queue_corpus().save_dir(root)
        crash_dir = root / "crashes"
        for i, tc in enumerate(self.crashes.entries):
            sig = self.crashes.stats[tc.id].signal or "crash"
            (crash_dir / f"id:{i:06d},sig:{sig},{tc.provenance.tag()}").write_bytes(tc.data)
        hang_dir = root / "hangs"
        for i, tc in enumerate(self.hangs.entries):
            (hang_dir / f"id:{i:06d},{tc.provenance.tag()}").write_bytes(tc.data)
        self.stats.write_timeline(root / "fuzzer_stats.csv")


def fuzz_loop(target: TargetSpec, seeds, cfg: FuzzConfig = FuzzConfig(), on_exec=None) -> FuzzStats:
    return Fuzzer(target, seeds, cfg, on_exec).run()
