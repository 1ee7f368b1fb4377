"""Scan the symmetric cooperative family and locate the coexistence threshold.

Prints the table ``c, lambda1(c), lambda, lambda1(c) - lambda`` and the
bracketed crossing, and writes the full result as JSON.

    python3 scripts/phase_scan.py --n-grid 240 --out scan.json
"""

import argparse
import time

from lvqsd.io import dumps_json
from lvqsd.regimes import scan_phase_transition
from lvqsd.sde import SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-grid", type=int, default=240)
    ap.add_argument("--tol-c", type=float, default=1e-2)
    ap.add_argument("--exit-paths", type=int, default=0,
                    help="simulate exit splits with this many paths (0 skips them)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    exit_cfg = None
    if args.exit_paths:
        exit_cfg = SimConfig(dt=2e-3, t_max=50.0, n_paths=args.exit_paths, seed=args.seed)
    t0 = time.perf_counter()
    res = scan_phase_transition(n_grid=args.n_grid, tol_c=args.tol_c, exit_cfg=exit_cfg,
                                threads=args.threads)
    print(f"{'c':>5} {'lambda1':>10} {'lambda':>10} {'gap':>11}  exit c1/c2")
    for r in res.rows:
        split = (f"{r.exit_c1:.3f}/{r.exit_c2:.3f}" if r.exit_status == "ok"
                 else r.exit_status)
        print(f"{r.c:5.2f} {r.lambda1:10.6f} {r.lambda_axis:10.6f} {r.gap:+11.6f}  {split}")
    print(f"independent lambda1 = {res.lambda1_independent:.6f} "
          f"(2 x axis = {2 * res.lambda_axis:.6f})")
    print(f"monotone: {res.monotone}; {res.status}; c_c = {res.c_c}; bracket {res.bracket}")
    print(f"{time.perf_counter() - t0:.1f}s")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps_json(res.to_dict()))


if __name__ == "__main__":
    main()
