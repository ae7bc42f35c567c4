import json
import time

import numpy as np

from lscox.grf import MaternSpec
from lscox.inference.chain import run_chain, posterior_summaries
from lscox.inference.state import FitSpec
from lscox.lattice import build_lattice
from lscox.model import CONSTANT, ClassSpec, GAUSSIAN, LevelSpec, LscpModel, Thresholds
from lscox.simulate import simulate_realization

model = LscpModel(
    level=LevelSpec(field=MaternSpec(1.0, 0.4), mean=0.0),
    thresholds=Thresholds((0.0,)), sigma_eps=0.3,
    classes=(ClassSpec(GAUSSIAN, field=MaternSpec(1.0, 0.2), mean=7.0),
             ClassSpec(CONSTANT, mean=-2.0)))
lat = build_lattice((2.0, 1.0), 60, 30, margin_level=0.45, margin_class=0.35)
truth = {"sigma_1": 1.0, "rho_1": 0.2, "mean_1": 7.0, "c_1": 0.0}

rows = []
t_all = time.time()
for i in range(20):
    dseed = 1000 + i
    rng = np.random.default_rng(dseed)
    real = simulate_realization(model, lat, rng)
    fit = FitSpec(model, lat, estimate_nugget=False, estimate_level_range=False)
    t0 = time.time()
    res = run_chain(fit, real.counts, n_iter=20000, burn_in=5000, thinning=15,
                    seed=dseed + 1000)
    dt = time.time() - t0
    summ = posterior_summaries(res)
    row = {"seed": dseed, "runtime": round(dt, 1),
           "points": int(real.counts.counts.sum())}
    for name, tv in truth.items():
        s = summ["parameters"][name]
        row[name] = {"mean": round(s["mean"], 4), "lo": round(s["lo"], 4),
                     "hi": round(s["hi"], 4), "ess": round(s["ess"], 1),
                     "cover": bool(s["lo"] <= tv <= s["hi"])}
    gmode = res.gamma_prob.argmax(axis=0)
    row["gamma_acc"] = round(float((gmode == real.gamma).mean()), 4)
    rows.append(row)
    cov = {k: sum(r[k]["cover"] for r in rows) for k in truth}
    print(f"rep {i}: acc {row['gamma_acc']} cum-cover {cov} "
          f"cum-mean-acc {np.mean([r['gamma_acc'] for r in rows]):.4f}",
          flush=True)

out = {"rows": rows,
       "coverage": {k: sum(r[k]["cover"] for r in rows) for k in truth},
       "mean_acc": round(float(np.mean([r["gamma_acc"] for r in rows])), 4),
       "total_runtime": round(time.time() - t_all, 1)}
with open("/root/pkg/dev_c7_batch.json", "w") as fh:
    json.dump(out, fh, indent=1)
print(json.dumps(out["coverage"]), out["mean_acc"], out["total_runtime"], flush=True)
