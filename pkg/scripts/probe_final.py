"""Refined ordering probe: chosen contrast pair, larger held-out query sets,
fine-tuned comparison, per-task breakdown."""
import sys, time
import numpy as np
from kmrecon.model import ModelConfig, init_params
from kmrecon.tasks import generate_phantom, MaskSpec, build_task
from kmrecon.meta import TrainConfig, AdaptConfig, run_training, evaluate

pair = sys.argv[1]
seeds = [int(s) for s in sys.argv[2:]] or [11]
contrasts = {"T1T2": ["T1", "T2"], "PDT2": ["PD", "T2"]}[pair]
cfgm = ModelConfig()
tp = {c: [generate_phantom(1000+i, c, 32, 32) for i in range(20)] for c in contrasts}
hp = {c: [generate_phantom(5000+i, c, 32, 32) for i in range(40)] for c in contrasts}
def mk(pools, accs, s0, split):
    tasks, tid = [], s0
    for c in contrasts:
        for mt in ["cartesian", "gaussian"]:
            for acc in accs:
                tasks.append(build_task(pools[c], c, MaskSpec(mt, acc, 0.08), split, seed=tid)); tid += 1
    return tasks
train_tasks = mk(tp, [4.0, 8.0], 100, 0.5)
held = mk(hp, [6.0], 900, 0.25)   # 10 support / 30 query per task -> 120 eval samples
def med(evs): return float(np.median([r.psnr for e in evs for r in e.records]))

for seed in seeds:
    t0 = time.perf_counter()
    pk = init_params("km_maml", cfgm, seed=seed, dtype=np.float32)
    run_training(train_tasks, pk, TrainConfig(strategy="km_maml", epochs=200, seed=seed), cfgm, dtype=np.float32)
    pj = init_params("joint", cfgm, seed=seed, dtype=np.float32)
    run_training(train_tasks, pj, TrainConfig(strategy="joint", epochs=200, seed=seed), cfgm, dtype=np.float32)
    tr = evaluate(train_tasks, pk, "km_maml", cfgm, AdaptConfig("on_the_fly"))
    a = med(tr) - float(np.median([r.psnr for e in tr for r in e.zf_records]))
    ft = AdaptConfig("adapt_base", 10, 0.001)
    evk = evaluate(held, pk, "km_maml", cfgm, ft)
    evj = evaluate(held, pj, "joint", cfgm, ft)
    k, j = med(evk), med(evj)
    k_otf = med(evaluate(held, pk, "km_maml", cfgm, AdaptConfig("on_the_fly")))
    per_task = {e.task: round(float(np.median([r.psnr for r in e.records])) -
                              float(np.median([r.psnr for r in j_e.records])), 3)
                for e, j_e in zip(evk, evj)}
    print(f"[{pair} s{seed}] a={a:+.2f} | ft km {k:.3f} joint {j:.3f} d={k-j:+.3f} | "
          f"c(ft-otf)={k-k_otf:+.3f} | per-task {per_task} | ({time.perf_counter()-t0:.0f}s)", flush=True)
