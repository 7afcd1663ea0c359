"""Weighted KS distance of standardized passage times to their limit law, along a u ladder."""
import argparse

import numpy as np

from conehit.asymptotics import passage_time_law
from conehit.g_analysis import ProblemSpec, analyze
from conehit.path_sim import SimConfig, ks_critical, simulate_P


def main(rho: float, alpha, us, n_paths: int, seed: int, workers: int) -> None:
    spec = ProblemSpec(np.array([[1.0, rho], [rho, 1.0]]), alpha, [1.0, 1.0])
    g = analyze(spec)
    law = passage_time_law(g)
    print(f"# classification={g.classification} t0={g.t0:.4f} gtilde={g.gtilde:.4f}")
    print("u,n_hits,ess,ks,ks_1pct_critical_at_ess")
    for u in us:
        est = simulate_P(spec, SimConfig(u=u, n_steps_per_unit=256, n_paths=n_paths, seed=seed),
                         analysis=g, workers=workers, law=law)
        print(f"{u},{est.n_hits},{est.ess:.0f},{est.ks_vs_limit:.4f},{ks_critical(est.ess):.4f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--alpha", type=float, nargs=2, default=(1.0, 1.0))
    p.add_argument("--u", type=float, nargs="+", default=(2.0, 4.0, 6.0, 8.0))
    p.add_argument("--n-paths", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    main(a.rho, tuple(a.alpha), a.u, a.n_paths, a.seed, a.workers)
