"""Print where the fading link cost -log(1 - exp(-K/S)) is concave or convex in S."""

import numpy as np

from consensus_rate.power import cost_concavity_knee, edge_cost_second_derivative


def main():
    x = cost_concavity_knee()
    print(f"knee: K/S = {x:.8f}, i.e. concave for S >= {1 / x:.4f} K, convex below")
    for s in np.array([0.05, 0.1, 0.2, 0.4, 0.6, 1 / x, 0.8, 1.0, 2.0, 10.0]):
        c2 = edge_cost_second_derivative(s, 1.0)
        print(f"  S/K = {s:7.4f}   c'' = {c2:+.4e}   {'flat' if abs(c2) < 1e-12 else 'convex' if c2 > 0 else 'concave'}")


if __name__ == "__main__":
    main()
