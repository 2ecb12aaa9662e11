"""Protocol matrix for the held-out ordering: one training per seed/pair,
many evaluation readings."""
import sys, time
import numpy as np
from kmrecon.model import ModelConfig, init_params
from kmrecon.tasks import generate_phantom, MaskSpec, build_task
from kmrecon.meta import TrainConfig, AdaptConfig, run_training, evaluate

pair = sys.argv[1]          # e.g. T1T2 or PDT2
seeds = [int(s) for s in sys.argv[2:]] or [11]
contrasts = {"T1T2": ["T1", "T2"], "PDT2": ["PD", "T2"], "PDFL": ["PD", "FLAIR"]}[pair]
cfgm = ModelConfig()

tp = {c: [generate_phantom(1000+i, c, 32, 32) for i in range(20)] for c in contrasts}
hp = {c: [generate_phantom(5000+i, c, 32, 32) for i in range(20)] for c in contrasts}
def mk(pools, accs, s0):
    tasks, tid = [], s0
    for c in contrasts:
        for mt in ["cartesian", "gaussian"]:
            for acc in accs:
                tasks.append(build_task(pools[c], c, MaskSpec(mt, acc, 0.08), 0.5, seed=tid)); tid += 1
    return tasks
train_tasks = mk(tp, [4.0, 8.0], 100)
held = mk(hp, [6.0], 900)
held_trainpool = mk(tp, [6.0], 1300)
def med(evs): return float(np.median([r.psnr for e in evs for r in e.records]))

for seed in seeds:
    t0 = time.perf_counter()
    pk = init_params("km_maml", cfgm, seed=seed, dtype=np.float32)
    run_training(train_tasks, pk, TrainConfig(strategy="km_maml", epochs=200, seed=seed), cfgm, dtype=np.float32)
    pj = init_params("joint", cfgm, seed=seed, dtype=np.float32)
    run_training(train_tasks, pj, TrainConfig(strategy="joint", epochs=200, seed=seed), cfgm, dtype=np.float32)
    ev = {}
    tr_ev = evaluate(train_tasks, pk, "km_maml", cfgm, AdaptConfig("on_the_fly"))
    a_margin = med(tr_ev) - float(np.median([r.psnr for e in tr_ev for r in e.zf_records]))
    rows = []
    for label, tasks in [("held", held), ("tpool", held_trainpool)]:
        k_otf = med(evaluate(tasks, pk, "km_maml", cfgm, AdaptConfig("on_the_fly")))
        j_otf = med(evaluate(tasks, pj, "joint", cfgm, AdaptConfig("on_the_fly")))
        rows.append(f"{label}: otf {k_otf-j_otf:+.3f}")
        for lr in (0.001, 0.005):
            kb = med(evaluate(tasks, pk, "km_maml", cfgm, AdaptConfig("adapt_base", 10, lr)))
            jb = med(evaluate(tasks, pj, "joint", cfgm, AdaptConfig("adapt_base", 10, lr)))
            kh = med(evaluate(tasks, pk, "km_maml", cfgm, AdaptConfig("adapt_hypernet", 10, lr)))
            rows.append(f"ftb{lr:g} {kb-jb:+.3f}(k{kb:.2f}) fth{lr:g} {kh-jb:+.3f}")
        if label == "held":
            c_otf, c_ft = k_otf, kb
    print(f"[{pair} seed {seed}] a={a_margin:+.2f} | " + " | ".join(rows) +
          f" | ({time.perf_counter()-t0:.0f}s)", flush=True)
