"""Desk-scale experiment probe: per-seed margins for the acceptance ordering
experiment under configuration variants."""
import sys, time
import numpy as np
from kmrecon.model import ModelConfig, BaseNetConfig, HyperNetConfig, ContextEncoderConfig, init_params
from kmrecon.tasks import generate_phantom, MaskSpec, build_task
from kmrecon.meta import TrainConfig, AdaptConfig, run_training, evaluate

def make_tasks(pools, contrasts, accs, seed0, split=0.5):
    tasks, tid = [], seed0
    for c in contrasts:
        for mt in ["cartesian", "gaussian"]:
            for acc in accs:
                tasks.append(build_task(pools[c], c, MaskSpec(mt, acc, 0.08), split, seed=tid)); tid += 1
    return tasks

def run_one(seed, images, model_cfg, label):
    t0 = time.perf_counter()
    contrasts = ["T1", "T2"]
    tp = {c: [generate_phantom(1000+i, c, 32, 32) for i in range(images)] for c in contrasts}
    hp = {c: [generate_phantom(5000+i, c, 32, 32) for i in range(20)] for c in contrasts}
    train_tasks = make_tasks(tp, contrasts, [4.0, 8.0], 100)
    held_tasks = make_tasks(hp, contrasts, [6.0], 900)
    pk = init_params("km_maml", model_cfg, seed=seed, dtype=np.float32)
    run_training(train_tasks, pk, TrainConfig(strategy="km_maml", epochs=200, seed=seed), model_cfg, dtype=np.float32)
    pj = init_params("joint", model_cfg, seed=seed, dtype=np.float32)
    run_training(train_tasks, pj, TrainConfig(strategy="joint", epochs=200, seed=seed), model_cfg, dtype=np.float32)
    ev_tr = evaluate(train_tasks, pk, "km_maml", model_cfg, AdaptConfig("on_the_fly"))
    a_margin = np.median([r.psnr for e in ev_tr for r in e.records]) - np.median([r.psnr for e in ev_tr for r in e.zf_records])
    ev_k = evaluate(held_tasks, pk, "km_maml", model_cfg, AdaptConfig("on_the_fly"))
    ev_j = evaluate(held_tasks, pj, "joint", model_cfg, AdaptConfig("on_the_fly"))
    k_med = np.median([r.psnr for e in ev_k for r in e.records])
    j_med = np.median([r.psnr for e in ev_j for r in e.records])
    ev_ft = evaluate(held_tasks, pk, "km_maml", model_cfg, AdaptConfig("adapt_base", 10, 0.001))
    ft_med = np.median([r.psnr for e in ev_ft for r in e.records])
    per_task = {e.task: round(np.median([r.psnr for r in e.records]),3) for e in ev_k}
    per_task_j = {e.task: round(np.median([r.psnr for r in e.records]),3) for e in ev_j}
    print(f"[{label} seed {seed}] a={a_margin:+.2f}dB  b(km-joint)={k_med-j_med:+.3f}dB  "
          f"c(ft-otf)={ft_med-k_med:+.3f}dB  ({time.perf_counter()-t0:.0f}s)", flush=True)
    print(f"   km per-task: {per_task}", flush=True)
    print(f"   joint per-task: {per_task_j}", flush=True)

base = ModelConfig()
rich_ce = ModelConfig(ce=ContextEncoderConfig(channels=(16, 32)))
variant = sys.argv[1]
seeds = [int(s) for s in sys.argv[2:]] or [11]
for seed in seeds:
    if variant == "base":
        run_one(seed, 20, base, "base")
    elif variant == "img40":
        run_one(seed, 40, base, "img40")
    elif variant == "richce":
        run_one(seed, 20, rich_ce, "richce")
    elif variant == "img40richce":
        run_one(seed, 40, rich_ce, "img40richce")
