"""Sweep the correlation of a two-dimensional problem and tabulate the asymptotic constants."""
import argparse

import numpy as np

from conehit.asymptotics import assemble, two_dim_breakpoint
from conehit.g_analysis import ProblemSpec, analyze


def main(alpha, step: float) -> None:
    print("rho,classification,segments,junction,t0,ghat,gtilde,C_I")
    for rho in np.round(np.arange(-0.95, 0.951, step), 4):
        spec = ProblemSpec(np.array([[1.0, rho], [rho, 1.0]]), alpha, [1.0, 1.0])
        g = analyze(spec)
        ar = assemble(g)
        Q = two_dim_breakpoint(spec)
        print(f"{rho},{ar.description},{len(g.segments)},{'' if Q is None else f'{Q:.4f}'},"
              f"{g.t0:.6f},{g.ghat:.6f},{g.gtilde:.6f},{ar.C_I:.6f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alpha", type=float, nargs=2, default=(1.0, 0.5))
    p.add_argument("--step", type=float, default=0.05)
    a = p.parse_args()
    main(tuple(a.alpha), a.step)
