import csv
import json
from pathlib import Path

import pytest

from seedgan.cli import main
from seedgan.corpus import load_dir, load_seed_dir
from seedgan.fuzzer import TIMELINE_COLUMNS
from seedgan.targets import fixture

REPO = Path(__file__).resolve().parents[1]
TINY_MODEL = ["--set", "model.noise_dim=4", "--set", "model.gen_hidden=16", "--set", "model.critic_hidden=16",
              "--set", "gan.batch_size=8", "--set", "gan.checkpoint_every=2"]


@pytest.fixture(scope="module")
def corpus16(tmp_path_factory):
    base = tmp_path_factory.mktemp("c")
    (base / "seeds").mkdir()
    (base / "seeds" / "valid").write_bytes(fixture("cnk_valid.bin"))
    out = base / "corpus"
    assert main(["collect", "--target", "cnk", "--seeds", str(base / "seeds"), "--exec-budget", "3000", "--out", str(out),
                 "--set", "collect.max_corpus=16", "--set", "collect.max_len=64"]) == 0
    assert len(load_dir(out)) == 16
    return out


def test_targets_lists_both(capsys):
    assert main(["targets", "--json"]) == 0
    names = [json.loads(l)["name"] for l in capsys.readouterr().out.splitlines()]
    assert names == ["cnk", "melf"]


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main([]) == 1
    assert main(["collect", "--target", "nosuch", "--out", str(tmp_path / "x")]) == 1
    assert main(["fuzz", "--target", "cnk"]) == 1
    assert main(["train", "--corpus", "x", "--out", "y"]) == 1  # neither --wgan nor --gan
    assert main(["targets", "--set", "gan.n_critic=0"]) == 1
    assert main(["--help"]) == 0
    assert "error:" in capsys.readouterr().err


def test_collect_time_budget_gives_nonempty_queue(tmp_path):
    out = tmp_path / "c"
    assert main(["collect", "--target", "cnk", "--budget", "2", "--out", str(out)]) == 0
    assert len(list((out / "queue").iterdir())) > 32


def test_collect_zero_budget_keeps_fixtures(tmp_path):
    seeds = tmp_path / "seeds"
    seeds.mkdir()
    (seeds / "a").write_bytes(fixture("cnk_valid.bin"))
    out = tmp_path / "c"
    assert main(["collect", "--target", "cnk", "--seeds", str(seeds), "--budget", "0", "--out", str(out)]) == 0
    assert load_dir(out).data() == [fixture("cnk_valid.bin")]


def test_refuses_to_clobber_without_overwrite(tmp_path):
    out = tmp_path / "c"
    args = ["collect", "--target", "cnk", "--exec-budget", "200", "--out", str(out)]
    assert main(args) == 0
    (out / "stray").write_text("x")
    assert main(args) == 1
    assert (out / "stray").exists()
    first = sorted(p.name for p in (out / "queue").iterdir())
    assert main(args + ["--overwrite"]) == 0
    assert not (out / "stray").exists()
    assert sorted(p.name for p in (out / "queue").iterdir()) == first


def test_train_is_deterministic_and_logged(corpus16, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["train", "--corpus", str(corpus16), "--wgan", "--epochs", "5", "--seed", "3",
                     "--out", str(out), *TINY_MODEL]) == 0
    ckpts = sorted(p.name for p in a.glob("*.ckpt"))
    assert ckpts == ["wgan-e0002.ckpt", "wgan-e0004.ckpt", "wgan-e0005.ckpt"]
    for name in ckpts:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = list(csv.reader(open(a / "train_log.csv")))
    assert rows[0] == ["epoch", "loss_g", "loss_d", "lr", "seconds"]
    assert len(rows) == 6


def test_train_names_corrupt_corpus_file(corpus16, tmp_path, capsys):
    bad = tmp_path / "bad"
    (bad / "queue").mkdir(parents=True)
    (bad / "queue" / "id:000000,orig").write_bytes(b"CNK1")
    (bad / "queue" / "id:000001,orig").write_bytes(b"")
    assert main(["train", "--corpus", str(bad), "--gan", "--epochs", "1", "--out", str(tmp_path / "o")]) == 2
    assert "id:000001,orig" in capsys.readouterr().err


def test_generate_then_fuzz_roundtrip(corpus16, tmp_path):
    ck = tmp_path / "ck"
    assert main(["train", "--corpus", str(corpus16), "--gan", "--epochs", "2", "--out", str(ck), *TINY_MODEL]) == 0
    gen = tmp_path / "gen"
    assert main(["generate", "--checkpoint", str(ck / "gan-e0002.ckpt"), "-n", "10", "--out", str(gen)]) == 0
    assert len(list(gen.iterdir())) == 10
    picked = tmp_path / "picked"
    assert main(["generate", "--checkpoint", str(ck), "--target", "cnk", "-n", "3", "--out", str(picked)]) == 0
    assert len(load_seed_dir(picked)) == 3
    assert main(["generate", "--checkpoint", str(ck), "-n", "0", "--out", str(tmp_path / "z")]) == 1
    assert main(["generate", "--checkpoint", str(ck), "-n", "3", "--out", str(tmp_path / "z")]) == 1  # no --target
    fz = tmp_path / "fz"
    assert main(["fuzz", "--target", "cnk", "--seeds", str(gen), "--exec-budget", "2000", "--out", str(fz)]) == 0
    header = next(csv.reader(open(fz / "fuzzer_stats.csv")))
    assert tuple(header) == TIMELINE_COLUMNS
    assert (fz / "crashes").is_dir()


def test_fuzz_empty_seed_dir_is_runtime_error(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["fuzz", "--target", "cnk", "--seeds", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 2


def test_json_lines_mirror_human_output(tmp_path, capsys):
    seeds = tmp_path / "seeds"
    seeds.mkdir()
    (seeds / "v").write_bytes(fixture("melf_valid.bin"))
    args = ["fuzz", "--target", "melf", "--seeds", str(seeds), "--exec-budget", "500"]
    assert main(args + ["--out", str(tmp_path / "h")]) == 0
    human = capsys.readouterr().out
    assert main(args + ["--json", "--out", str(tmp_path / "j")]) == 0
    (event,) = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert event["event"] == "fuzz" and event["executions"] == 500
    assert event["message"].split(" -> ")[0] == human.strip().split(" -> ")[0]


def test_desk_plan_end_to_end(tmp_path, capsys):
    plan = REPO / "plans" / "desk.plan"
    out = tmp_path / "report"
    shrink = ["--set", "plan.trials=1", "--set", "plan.exec_budget=1000", "--set", "plan.bootstrap_exec_budget=1000",
              "--set", "plan.seeds_per_group=4", "--set", "gan.epochs=2", "--set", "collect.max_corpus=32",
              "--set", "model.gen_hidden=16", "--set", "model.critic_hidden=16"]
    assert main(["eval", "--plan", str(plan), "--out", str(out), "--json", *shrink]) == 0
    rows = list(csv.reader(open(out / "summary.csv")))
    assert len(rows) == 4
    events = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert events[-1]["event"] == "eval" and events[-1]["failed"] == 0


def test_eval_unknown_group(tmp_path):
    p = tmp_path / "bad.plan"
    p.write_text("plan.groups = AFL, FOO-AFL\n")
    assert main(["eval", "--plan", str(p), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()
