"""Convergence of the one-dimensional Pickands estimate in T and in the grid step.

The continuous-time H(T) is known from the running-maximum law of drifted
Brownian motion, so every row shows raw grid bias, extrapolated value and
the exact target.
"""
import argparse
import math
from dataclasses import dataclass

from scipy.integrate import quad
from scipy.special import log_ndtr, ndtr

from conehit.pickands_mc import PickandsInput, estimate_HT


@dataclass
class Config:
    T_values: tuple = (2.0, 8.0, 32.0)
    points_per_unit: tuple = (8, 32, 128)
    n_paths: int = 20_000
    seed: int = 0
    workers: int = 1


def exact_HT(T: float) -> float:
    s = math.sqrt(T)
    f = lambda x: math.exp(2 * x + log_ndtr(-(x + T) / s)) + ndtr(-(x - T) / s)
    return 0.5 + quad(f, 0, T + 40 * s, limit=400, points=[T])[0]


def main(cfg: Config) -> None:
    print("T,points_per_unit,raw_over_T,extrapolated_over_T,stderr_over_T,exact_over_T")
    for T in cfg.T_values:
        exact = exact_HT(T) / T
        for k in cfg.points_per_unit:
            inp = PickandsInput([[1.0]], [1.0], [2.0], T=T, n_steps=int(T * k),
                                n_paths=cfg.n_paths, seed=cfg.seed)
            est = estimate_HT(inp, workers=cfg.workers)
            print(f"{T},{k},{est.HT / T:.5f},{est.HT_over_T:.5f},{est.stderr_over_T:.5f},{exact:.5f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-paths", type=int, default=Config.n_paths)
    p.add_argument("--seed", type=int, default=Config.seed)
    p.add_argument("--workers", type=int, default=Config.workers)
    a = p.parse_args()
    main(Config(n_paths=a.n_paths, seed=a.seed, workers=a.workers))
