"""Mechanism diagnostics for the held-out ordering experiment."""
import sys, time
import numpy as np
from kmrecon.model import ModelConfig, init_params, layer_table
from kmrecon.model.context_encoder import context_embed
from kmrecon.model.hypernet import layer_modulations
from kmrecon.tasks import generate_phantom, MaskSpec, build_task
from kmrecon.meta import TrainConfig, AdaptConfig, run_training, evaluate, finetune
from kmrecon.meta.evaluate import infer_sample
from kmrecon.metrics import psnr
from kmrecon.numerics import Tensor

contrasts = ["T1", "T2"]
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
held_tasks = mk(hp, [6.0], 900)
trainpool_6x = mk(tp, [6.0], 1300)
cfgm = ModelConfig()

def med(evs): return float(np.median([r.psnr for e in evs for r in e.records]))

for seed in [int(s) for s in sys.argv[1:]] or [11]:
    t0 = time.perf_counter()
    pk = init_params("km_maml", cfgm, seed=seed, dtype=np.float32)
    run_training(train_tasks, pk, TrainConfig(strategy="km_maml", epochs=200, seed=seed), cfgm, dtype=np.float32)
    pj = init_params("joint", cfgm, seed=seed, dtype=np.float32)
    run_training(train_tasks, pj, TrainConfig(strategy="joint", epochs=200, seed=seed), cfgm, dtype=np.float32)
    tr_k = med(evaluate(train_tasks, pk, "km_maml", cfgm, AdaptConfig("on_the_fly")))
    tr_j = med(evaluate(train_tasks, pj, "joint", cfgm, AdaptConfig("on_the_fly")))
    h_k = med(evaluate(held_tasks, pk, "km_maml", cfgm, AdaptConfig("on_the_fly")))
    h_j = med(evaluate(held_tasks, pj, "joint", cfgm, AdaptConfig("on_the_fly")))
    # task-level gamma inference on held tasks
    vals = []
    for task in held_tasks:
        res = finetune(list(task.support), pk, "km_maml", cfgm, AdaptConfig("adapt_base", 0, 0.0))
        phi = {k: t.detach() for k, t in res.theta.items()}
        for s in task.query:
            rec = infer_sample(s, pk, "km_maml", cfgm, theta_override=phi)
            vals.append(psnr(rec.magnitude(), s.x_fs.magnitude()))
    h_k_taskg = float(np.median(vals))
    # 6x tasks over training imagery
    t6_k = med(evaluate(trainpool_6x, pk, "km_maml", cfgm, AdaptConfig("on_the_fly")))
    t6_j = med(evaluate(trainpool_6x, pj, "joint", cfgm, AdaptConfig("on_the_fly")))
    # modulation deviation from identity
    omega = {k: t.detach() for k, t in pk.omega.items()}
    ce = {k: t.detach() for k, t in pk.ce.items()}
    def wdev(tasks):
        out = []
        for task in tasks[:4]:
            for s in list(task.query)[:3]:
                g, _ = context_embed(Tensor(s.x_us.to_channels(np.float64)), ce)
                mods = layer_modulations(g, omega, layer_table(cfgm.base), 1)
                out.append(np.mean([np.abs(m.weight.data - 1).mean() for m in mods.values()]))
        return float(np.mean(out))
    print(f"[seed {seed}] TRAIN km {tr_k:.2f} joint {tr_j:.2f} (km-joint {tr_k-tr_j:+.3f}) | "
          f"HELD km {h_k:.3f} joint {h_j:.3f} ({h_k-h_j:+.3f}) taskg {h_k_taskg:.3f} | "
          f"TRAIN6x km {t6_k:.3f} joint {t6_j:.3f} ({t6_k-t6_j:+.3f}) | "
          f"|W-1| train {wdev(train_tasks):.4f} held {wdev(held_tasks):.4f} ({time.perf_counter()-t0:.0f}s)", flush=True)
