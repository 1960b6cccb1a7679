"""Testcases, execution outcomes, the high-quality filter and corpus storage."""

from __future__ import annotations

import enum
import hashlib
import itertools
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .coverage import CoverageMap, GlobalCoverageState, hamming64

MAX_TESTCASE_LEN = 4096

_counter = itertools.count()


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class Provenance:
    """Where a testcase came from: ``initial``, ``mutated`` or ``generated``.

    ``ref`` is the parent testcase id for mutated inputs and the checkpoint
    id for generated ones.
    """

    kind: str = "initial"
    ref: str | None = None

    def __post_init__(self):
        if self.kind not in ("initial", "mutated", "generated"):
            raise ValueError(f"bad provenance kind {self.kind!r}")

    @classmethod
    def initial(cls) -> Provenance:
        return cls("initial")

    @classmethod
    def mutated(cls, parent_id: str) -> Provenance:
        return cls("mutated", parent_id)

    @classmethod
    def generated(cls, checkpoint_id: str) -> Provenance:
        return cls("generated", checkpoint_id)

    def tag(self) -> str:
        """Filename fragment in AFL's ``orig`` / ``src:`` style."""
        if self.kind == "initial":
            return "orig"
        if self.kind == "mutated":
            return f"src:{self.ref}"
        return f"gen:{self.ref}"

    @classmethod
    def from_tag(cls, tag: str) -> Provenance:
        if tag == "orig":
            return cls.initial()
        if tag.startswith("src:"):
            return cls.mutated(tag[4:])
        if tag.startswith("gen:"):
            return cls.generated(tag[4:])
        raise CorpusError(f"unrecognised provenance tag {tag!r}")


@dataclass(frozen=True)
class Testcase:
    data: bytes
    id: str = ""
    provenance: Provenance = Provenance()
    created_at: int = field(default_factory=lambda: next(_counter))

    def __post_init__(self):
        if len(self.data) < 1:
            raise ValueError("testcase data must be non-empty")
        if not self.id:
            object.__setattr__(self, "id", f"t{self.created_at:06d}")

    @property
    def digest(self) -> str:
        return hashlib.sha1(self.data).hexdigest()


class Status(enum.Enum):
    OK = "ok"
    CRASH = "crash"
    TIMEOUT = "timeout"


@dataclass
class ExecOutcome:
    status: Status
    coverage: CoverageMap
    new_edge_count: int = 0
    signal: str | None = None

    @property
    def path_hash(self) -> int:
        return self.coverage.path_hash

    @property
    def crashed(self) -> bool:
        return self.status is Status.CRASH


@dataclass(frozen=True)
class QualityConfig:
    coverage_quantile: float = 90.0
    divergence_bits: int = 16


@dataclass(frozen=True)
class QualityVerdict:
    crash: bool
    high_coverage: bool
    new_path: bool
    divergent_path: bool

    @property
    def accepted(self) -> bool:
        return self.crash or self.high_coverage or self.new_path or self.divergent_path


def evaluate_quality(
    tc: Testcase,
    out: ExecOutcome,
    global_state: GlobalCoverageState,
    cfg: QualityConfig = QualityConfig(),
) -> QualityVerdict:
    """Score one executed testcase against the four high-quality criteria.

    ``global_state`` supplies the percentile history (outcomes seen before
    this one) and the parent's path hash; nothing is mutated here.
    """
    if out.coverage.size != global_state.size:
        raise ValueError(
            f"coverage map size {out.coverage.size} != global map size {global_state.size}"
        )
    threshold = global_state.coverage_percentile(cfg.coverage_quantile)
    high = threshold is not None and out.coverage.nonzero >= threshold
    parent = tc.provenance.ref if tc.provenance.kind == "mutated" else None
    ref_hash = global_state.parent_hash(parent)
    divergent = ref_hash is not None and hamming64(out.path_hash, ref_hash) >= cfg.divergence_bits
    return QualityVerdict(
        crash=out.crashed,
        high_coverage=high,
        new_path=out.new_edge_count > 0,
        divergent_path=divergent,
    )


class Corpus:
    """Ordered, content-deduplicated collection of testcases."""

    def __init__(self, entries=()):
        self.entries: list[Testcase] = []
        self.stats: dict[str, ExecOutcome] = {}
        self._digests: set[str] = set()
        self._lock = threading.RLock()
        for tc in entries:
            self.add(tc)

    def add(self, tc: Testcase, outcome: ExecOutcome | None = None) -> bool:
        with self._lock:
            d = tc.digest
            if d in self._digests:
                return False
            self._digests.add(d)
            self.entries.append(tc)
            if outcome is not None:
                self.stats[tc.id] = outcome
            return True

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(list(self.entries))

    def __contains__(self, data) -> bool:
        return hashlib.sha1(bytes(data)).hexdigest() in self._digests

    def data(self) -> list[bytes]:
        return [tc.data for tc in self.entries]

    def crashing(self) -> list[Testcase]:
        return [tc for tc in self.entries if tc.id in self.stats and self.stats[tc.id].crashed]

    def save_dir(self, path) -> Path:
        return save_dir(self, path)


_NAME_RE = re.compile(r"^id:(\d{6,}),(.+)$")


def save_dir(corpus: Corpus, path) -> Path:
    """Write ``queue/``, ``crashes/`` and ``hangs/`` in AFL's naming scheme."""
    root = Path(path)
    dirs = {name: root / name for name in ("queue", "crashes", "hangs")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    for i, tc in enumerate(corpus.entries):
        name = f"id:{i:06d},{tc.provenance.tag()}"
        (dirs["queue"] / name).write_bytes(tc.data)
        out = corpus.stats.get(tc.id)
        if out is not None and out.status is Status.CRASH:
            (dirs["crashes"] / name).write_bytes(tc.data)
        elif out is not None and out.status is Status.TIMEOUT:
            (dirs["hangs"] / name).write_bytes(tc.data)
    return root


def load_dir(path, max_len: int | None = None) -> Corpus:
    """Load a corpus written by :func:`save_dir` (order taken from ``id:``)."""
    root = Path(path)
    queue = root / "queue"
    if not queue.is_dir():
        raise CorpusError(f"{root}: missing queue/ directory")
    named = []
    for f in queue.iterdir():
        if f.name.startswith("."):
            continue
        m = _NAME_RE.match(f.name)
        if not m or not f.is_file():
            raise CorpusError(f"{f}: not an AFL-style queue file")
        named.append((int(m.group(1)), m.group(2), f))
    named.sort()
    corpus = Corpus()
    for idx, tag, f in named:
        data = f.read_bytes()
        if not data:
            raise CorpusError(f"{f}: empty testcase")
        if max_len is not None and len(data) > max_len:
            raise CorpusError(f"{f}: {len(data)} bytes exceeds limit {max_len}")
        try:
            prov = Provenance.from_tag(tag)
        except CorpusError as exc:
            raise CorpusError(f"{f}: {exc}") from None
        corpus.add(Testcase(data, id=f"{idx:06d}", provenance=prov))
    return corpus


def load_seed_dir(path) -> list[bytes]:
    """Seeds from either an AFL corpus directory or a flat directory of files."""
    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"{root}: not a directory")
    if (root / "queue").is_dir():
        return load_dir(root).data()
    seeds = []
    for f in sorted(root.iterdir()):
        if f.is_file() and not f.name.startswith("."):
            data = f.read_bytes()
            if data:
                seeds.append(data)
    if not seeds:
        raise CorpusError(f"{root}: no non-empty seed files")
    return seeds
