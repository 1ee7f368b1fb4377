"""Monte Carlo check of the coexistence mixture weights.

In the coexistence regime the law conditioned on ``T0 > t`` converges to a
mixture of the two axis QSDs and the interior QSD.  This script simulates
paths started from the interior QSD, stops them at ``T0`` and reports the
fraction of survivors on each axis and in the interior at a few times.  The
fractions are compared with both stored weight formulas (``PROOF`` and
``THEOREM``), which differ by a factor ``lambda1`` on the axis weights.

    python3 scripts/mixture_weights_mc.py --c 0.6 --paths 10000
"""

import argparse
import time

import numpy as np

from lvqsd.conditioning import exit_statistics, sample_from_density
from lvqsd.model import KolmogorovModel
from lvqsd.regimes import Classification, compose_qsd, symmetric_cooperative
from lvqsd.sde import SimConfig, simulate_paths
from lvqsd.spectral import auto_grid, solve_qsd_1d, solve_qsd_2d


def survivor_fractions(final_x: np.ndarray, alive: np.ndarray):
    x = final_x[alive]
    on_axis1 = (x[:, 0] > 0) & (x[:, 1] == 0)
    on_axis2 = (x[:, 0] == 0) & (x[:, 1] > 0)
    n = max(x.shape[0], 1)
    return np.array([on_axis1.sum(), on_axis2.sum(), x.shape[0] - on_axis1.sum() - on_axis2.sum()]) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--c", type=float, default=0.6)
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--dt", type=float, default=2e-3)
    ap.add_argument("--times", type=float, nargs="+", default=[10.0, 20.0, 30.0, 40.0])
    ap.add_argument("--n-grid", type=int, default=160)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    t0 = time.perf_counter()
    m = KolmogorovModel(symmetric_cooperative(args.c))
    res = solve_qsd_2d(m, auto_grid(m, n=args.n_grid), k=1)
    l11, l12 = (solve_qsd_1d(m, a, k=1).lambda1 for a in (1, 2))
    ex = exit_statistics(m, res, SimConfig(dt=args.dt, t_max=40.0 / res.lambda1,
                                           n_paths=2000, seed=args.seed + 1))
    mix = compose_qsd(Classification.COEXISTENCE, (res.lambda1, l11, l12), ex.c1_hat, ex.c2_hat)
    print(f"c={args.c}: lambda1={res.lambda1:.5f} lambda11={l11:.5f} lambda12={l12:.5f} "
          f"c1={ex.c1_hat:.3f} c2={ex.c2_hat:.3f}")
    for name, w in mix.variants.items():
        print(f"  {name:8s} weights axis1/axis2/interior = "
              + "/".join(f"{v:.4f}" for v in w))

    starts = sample_from_density(res.nu1, res.grid, args.paths, seed=args.seed)
    print(f"{'t':>6} {'survivors':>10} {'axis1':>8} {'axis2':>8} {'interior':>9} {'+-':>6}")
    for t in args.times:
        batch = simulate_paths(m, starts, SimConfig(dt=args.dt, t_max=t, n_paths=args.paths,
                                                     seed=args.seed), stop="T0")
        alive = np.isinf(batch.T0)
        f = survivor_fractions(batch.final_x, alive)
        se = np.sqrt(f[2] * (1 - f[2]) / max(alive.sum(), 1))
        print(f"{t:6.1f} {int(alive.sum()):10d} {f[0]:8.4f} {f[1]:8.4f} {f[2]:9.4f} {se:6.4f}")
    print(f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
