"""
Multi-Dimensional Consensus Probe

Runs seeded random scenarios whose decay certificate does not hold and
reports how far the group diameter shrinks. Nothing is asserted.
Usage: python scripts/probe_consensus.py --dim 2 --agents 6 --seeds 0 1 2 3
"""

import argparse
import os
import sys

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.core.logging import setup_logging, get_logger
from src.simulation.analysis import probe_multid_consensus
from src.simulation.influence import InfluenceFunction

setup_logging(level="INFO")
logger = get_logger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Probe multi-D consensus without a decay certificate")
    parser.add_argument("--agents", type=int, default=6)
    parser.add_argument("--dim", type=int, default=2)
    parser.add_argument("--c", type=float, default=1.2)
    parser.add_argument("--kappa", type=float, default=1.0)
    parser.add_argument("--beta", type=float, default=1.0)
    parser.add_argument("--box-radius", type=float, default=2.0)
    parser.add_argument("--T", type=float, default=30.0)
    parser.add_argument("--dt", type=float, default=0.02)
    parser.add_argument("--seeds", type=int, nargs="+", default=list(range(8)))
    parser.add_argument("--all", action="store_true", help="Include certified scenarios")
    args = parser.parse_args()

    psi = InfluenceFunction.rational(args.kappa, args.beta)

    print("=" * 60)
    print("Multi-Dimensional Consensus Probe")
    print("=" * 60)
    print(f"\nKernel: {psi.describe()}, c = {args.c:g}")
    print(f"Agents: {args.agents} in {args.dim}D, box radius {args.box_radius:g}")

    results = probe_multid_consensus(
        psi, args.c, args.agents, args.dim, args.box_radius,
        seeds=args.seeds, T=args.T, dt=args.dt, only_uncertified=not args.all
    )
    if not results:
        print("\nEvery seed carried a decay certificate; nothing to probe.")
        return

    print(f"\n{'seed':>6} {'lambda':>12} {'d0':>10} {'d(T)':>12} {'ratio':>10}")
    for r in results:
        print(f"{r.seed:>6} {r.lam:>12.4g} {r.d0:>10.4g} {r.d_final:>12.4g} {r.ratio:>10.3g}")

    shrunk = sum(1 for r in results if r.ratio < 0.05)
    print(f"\n{shrunk}/{len(results)} scenarios reached d(T) < 0.05 d(0)")


if __name__ == "__main__":
    main()
