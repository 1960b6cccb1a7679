"""Walk through the whole pipeline on the cnk target in about a minute.

    python demos/pipeline_tour.py

1. Bootstrap-fuzz the bundled valid files and keep high-quality testcases.
2. Train a WGAN on them (the narrow desk-plan generator).
3. Sample seeds from the best checkpoint and look at what came out.
4. Fuzz from the generated seeds and from the plain valid files with the
   same execution budget, and compare.
"""

import numpy as np

from seedgan.collect import CollectConfig, collect
from seedgan.config import load_config
from seedgan.encoding import encode
from seedgan.fuzzer import FuzzConfig, fuzz_loop
from seedgan.gan import generate_seeds, select_generators, train_wgan
from seedgan.targets import get_target

cfg = load_config("plans/desk.plan")
cnk = get_target("cnk")
valid = cnk.baseline_seeds(32)

print("== bootstrap")
res = collect(cnk, valid, CollectConfig(max_corpus=1000, max_len=128), FuzzConfig(exec_budget=300_000, seed=0))
lengths = [len(tc.data) for tc in res.corpus]
print(f"{res.stats.executions} executions, {res.accepted}/{res.evaluated} passed the quality filter")
print(f"kept {len(res.corpus)} testcases, median length {np.median(lengths):.0f}, flags {res.flags}")

print("== train")
enc = encode(res.corpus, hard_cap=128)
ckpts, log = train_wgan(enc, cfg.model.spec_for(enc.maxlen), cfg.gan)
print(f"{len(log.records)} epochs in {log.total_seconds:.1f}s, {len(ckpts)} checkpoints, "
      f"final critic loss {log.records[-1].loss_d:.5f}")

print("== generate")
best = select_generators(ckpts, cnk.validity_oracle)[0]
print(f"picked {best.checkpoint.id}: parser acceptance {best.acceptance:.2f}, distinct ratio {best.distinct:.2f}")
generated = [tc.data for tc in generate_seeds(best.checkpoint, 32)]
for s in generated[:4]:
    print("  ", s[:16], f"({len(s)} bytes)")
print("bytes 0..3 typically land 10 to 30 values away from b'CNK1' and are rarely exact;")
print("the fuzzer's arithmetic stage repairs them one byte at a time.")

print("== fuzz, 400k executions each")
for name, seeds in (("valid files", valid), ("WGAN seeds", generated)):
    st = fuzz_loop(cnk, seeds, FuzzConfig(exec_budget=400_000, seed=1))
    print(f"{name:12s} coverage {st.coverage_percent:5.1f}%  new paths {st.new_paths:3d}  "
          f"unique crashes {st.unique_crashes}")
