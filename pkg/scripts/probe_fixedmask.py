"""Ordering experiment with one fixed mask per task (mode = exact pattern)."""
import sys, time
import numpy as np
from kmrecon.model import ModelConfig, init_params
from kmrecon.tasks import generate_phantom, MaskSpec, build_task
from kmrecon.meta import TrainConfig, AdaptConfig, run_training, evaluate

seeds = [int(s) for s in sys.argv[1:]] or [11]
contrasts = ["T1", "T2"]
cfgm = ModelConfig()
tp = {c: [generate_phantom(1000+i, c, 32, 32) for i in range(20)] for c in contrasts}
hp = {c: [generate_phantom(5000+i, c, 32, 32) for i in range(20)] for c in contrasts}
def mk(pools, accs, s0):
    tasks, tid = [], s0
    for c in contrasts:
        for mt in ["cartesian", "gaussian"]:
            for acc in accs:
                tasks.append(build_task(pools[c], c, MaskSpec(mt, acc, 0.08), 0.5,
                                        seed=tid, mask_policy="per_task")); tid += 1
    return tasks
train_tasks = mk(tp, [4.0, 8.0], 100)
held = mk(hp, [6.0], 900)
def med(evs): return float(np.median([r.psnr for e in evs for r in e.records]))

for seed in seeds:
    t0 = time.perf_counter()
    pk = init_params("km_maml", cfgm, seed=seed, dtype=np.float32)
    run_training(train_tasks, pk, TrainConfig(strategy="km_maml", epochs=200, seed=seed), cfgm, dtype=np.float32)
    pj = init_params("joint", cfgm, seed=seed, dtype=np.float32)
    run_training(train_tasks, pj, TrainConfig(strategy="joint", epochs=200, seed=seed), cfgm, dtype=np.float32)
    tr = evaluate(train_tasks, pk, "km_maml", cfgm, AdaptConfig("on_the_fly"))
    a = med(tr) - float(np.median([r.psnr for e in tr for r in e.zf_records]))
    k_otf = med(evaluate(held, pk, "km_maml", cfgm, AdaptConfig("on_the_fly")))
    j_otf = med(evaluate(held, pj, "joint", cfgm, AdaptConfig("on_the_fly")))
    ft = AdaptConfig("adapt_base", 10, 0.001)
    k_ft = med(evaluate(held, pk, "km_maml", cfgm, ft))
    j_ft = med(evaluate(held, pj, "joint", cfgm, ft))
    print(f"[fixedmask s{seed}] a={a:+.2f} | otf km {k_otf:.3f} joint {j_otf:.3f} ({k_otf-j_otf:+.3f}) | "
          f"ft km {k_ft:.3f} joint {j_ft:.3f} ({k_ft-j_ft:+.3f}) | c={k_ft-k_otf:+.3f} | ({time.perf_counter()-t0:.0f}s)", flush=True)
