import csv

import numpy as np
import pytest

from seedgan.corpus import Status, load_dir
from seedgan.fuzzer import (
    TIMELINE_COLUMNS,
    FuzzAbort,
    FuzzConfig,
    Fuzzer,
    execute,
    fuzz_loop,
)
from seedgan.targets import TargetSpec, fixture, get_target
from seedgan.targets.base import ParseError, PlantedFault

CNK = get_target("cnk")
MELF = get_target("melf")


def test_execute_classifies_outcomes():
    assert execute(CNK, fixture("cnk_valid.bin")).status is Status.OK
    crash = execute(CNK, fixture("cnk_crash_csum_magic.bin"))
    assert crash.status is Status.CRASH and crash.signal == "cnk-csum-magic"
    # structured parse errors are ordinary executions
    assert execute(CNK, b"").status is Status.OK


def test_identical_input_identical_path_hash():
    a = execute(CNK, fixture("cnk_valid.bin"))
    b = execute(CNK, fixture("cnk_valid.bin"))
    assert a.path_hash == b.path_hash
    assert a.coverage == b.coverage


def test_zero_budget_returns_seeds_untouched():
    seeds = CNK.baseline_seeds(4)
    f = Fuzzer(CNK, seeds, FuzzConfig(exec_budget=0))
    stats = f.run()
    assert stats.executions == 0
    assert [e.testcase.data for e in f.queue] == seeds
    f = Fuzzer(CNK, seeds, FuzzConfig(time_budget=0))
    assert f.run().executions == 0
    assert len(f.queue) == 4


def test_needs_seeds():
    with pytest.raises(ValueError):
        Fuzzer(CNK, [])


def test_cnk_queue_grows_from_one_valid_file():
    f = Fuzzer(CNK, [fixture("cnk_valid.bin")], FuzzConfig(exec_budget=20_000))
    stats = f.run()
    assert stats.executions == 20_000
    assert len(f.queue) > 1
    assert stats.new_paths == len(f.queue) - 1


@pytest.mark.parametrize("target", [CNK, MELF], ids=lambda t: t.name)
def test_invariants_hold_under_check_flag(target):
    cfg = FuzzConfig(exec_budget=15_000, check_invariants=True, seed=3)
    stats = fuzz_loop(target, target.baseline_seeds(8), cfg)
    assert stats.unique_crashes <= stats.total_crashes
    covs = [s.coverage_percent for s in stats.timeline]
    assert covs == sorted(covs)
    assert 0 < stats.coverage_percent <= 100


def test_determinism_mode_bit_identical():
    cfg = FuzzConfig(exec_budget=10_000, seed=11)
    a = fuzz_loop(CNK, CNK.baseline_seeds(4), cfg)
    b = fuzz_loop(CNK, CNK.baseline_seeds(4), cfg)
    assert a == b
    c = fuzz_loop(CNK, CNK.baseline_seeds(4), FuzzConfig(exec_budget=10_000, seed=12))
    assert c.executions == a.executions


def test_crash_dedup_by_path_hash():
    seeds = [fixture("cnk_valid.bin"), fixture("cnk_crash_csum_magic.bin"), fixture("cnk_crash_csum_magic.bin")]
    f = Fuzzer(CNK, seeds, FuzzConfig(exec_budget=3))
    stats = f.run()
    assert stats.total_crashes == 2
    assert stats.unique_crashes == 1


def test_stop_on_crash():
    cfg = FuzzConfig(time_budget=30, stop_on_crash=True, seed=0)
    stats = fuzz_loop(CNK, [fixture("cnk_valid.bin")], cfg)
    assert stats.unique_crashes >= 1
    assert stats.elapsed < 30


def _spec(run, edges=4):
    return TargetSpec("toy", run, edges)


def test_all_seeds_timeout_aborts():
    import time

    def slow(data, e):
        e(0)
        time.sleep(0.01)

    with pytest.raises(FuzzAbort, match="timed out"):
        Fuzzer(_spec(slow), [b"a", b"b"], FuzzConfig(time_budget=5, timeout=0.001)).run()


def test_all_seeds_crash_aborts():
    def boom(data, e):
        e(0)
        raise PlantedFault("toy")

    with pytest.raises(FuzzAbort):
        Fuzzer(_spec(boom), [b"a"], FuzzConfig(time_budget=5)).run()


def test_unexpected_exceptions_count_as_crashes():
    def buggy(data, e):
        e(0)
        if data[:1] == b"!":
            raise IndexError("oops")
        raise ParseError("meh")

    out = execute(_spec(buggy), b"!")
    assert out.status is Status.CRASH


def test_save_layout_and_timeline_header(tmp_path):
    f = Fuzzer(CNK, [fixture("cnk_valid.bin")], FuzzConfig(exec_budget=5_000, sample_every_execs=500))
    stats = f.run()
    f.save(tmp_path)
    assert (tmp_path / "crashes").is_dir() and (tmp_path / "hangs").is_dir()
    assert len(load_dir(tmp_path)) == len(f.queue)
    rows = list(csv.reader(open(tmp_path / "fuzzer_stats.csv")))
    assert tuple(rows[0]) == TIMELINE_COLUMNS
    assert len(rows) - 1 == len(stats.timeline)
    assert int(rows[-1][1]) == stats.executions


def test_queue_growth_comes_from_mutations():
    f = Fuzzer(MELF, MELF.baseline_seeds(4), FuzzConfig(exec_budget=10_000, seed=2))
    f.run()
    for e in f.queue[4:]:
        assert e.testcase.provenance.kind == "mutated"
    assert f.global_state.covered == f.stats.covered_edges
    assert np.count_nonzero(f.global_state.classes) <= MELF.total_edges
