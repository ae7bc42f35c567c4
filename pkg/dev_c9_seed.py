import sys
import time

from lscox.convergence_checks import refine_study
from lscox.grf import MaternSpec
from lscox.model import CONSTANT, ClassSpec, GAUSSIAN, LevelSpec, LscpModel, Thresholds

seed = int(sys.argv[1])
n_iter = int(sys.argv[2]) if len(sys.argv) > 2 else 6000
model = LscpModel(
    level=LevelSpec(field=MaternSpec(1.0, 0.4), mean=0.0),
    thresholds=Thresholds((0.0,)), sigma_eps=0.3,
    classes=(ClassSpec(GAUSSIAN, field=MaternSpec(1.0, 0.2), mean=6.0),
             ClassSpec(CONSTANT, mean=3.5, fixed=True)))
t0 = time.time()
rep = refine_study(model, (1.0, 2.0),
                   sizes=[(15, 30), (30, 60), (60, 120)],
                   orders=("half", "full"),
                   margin_level=0.45, margin_class=0.35,
                   seed=seed, n_iter=n_iter, burn_in=n_iter // 2, thinning=5,
                   fit_spec_kwargs={"estimate_nugget": False,
                                    "estimate_level_range": False,
                                    "estimate_thresholds": False})
print(f"seed {seed} n_iter {n_iter}: fraction {rep.fraction_shrinking:.4f} "
      f"runtime {time.time() - t0:.0f}s", flush=True)
for key, flag in sorted(rep.shrink_flags.items()):
    print(" ", key, flag, flush=True)
for row in rep.rows:
    print(f"  {row.order} {row.size} {row.functional} mean {row.mean:+.4f} "
          f"sd {row.sd:.4f} delta "
          f"{'' if row.delta is None else format(row.delta, '+.4f')}",
          flush=True)
