#!/usr/bin/env python3
"""Train the toy softmax policy with the GRPO objective and write its
learning curve as CSV.

Usage:
    python scripts/run_toy_grpo.py --iters 800 --seed 0 --out grpo_curve.csv
"""

import argparse

from tracegen.grpo import GrpoConfig
from tracegen.toytrain import toy_train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iters", type=int, default=800)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lr", type=float, default=0.5)
    parser.add_argument("--beta", type=float, default=0.04)
    parser.add_argument("--epsilon", type=float, default=0.2)
    parser.add_argument("--out", default="grpo_curve.csv")
    args = parser.parse_args()

    config = GrpoConfig(epsilon=args.epsilon, beta=args.beta)
    curve = toy_train(config=config, iterations=args.iters, seed=args.seed, learning_rate=args.lr)
    curve.write_csv(args.out)

    first, last = curve.stats[0], curve.stats[-1]
    print(f"wrote {args.out} ({len(curve.stats)} rows)")
    print(f"mean reward          {first.mean_reward:.4f} -> {last.mean_reward:.4f}")
    print(f"overlength fraction  {first.overlength_fraction:.4f} -> {last.overlength_fraction:.4f}")
    print(f"mean response length {first.mean_response_len:.1f} -> {last.mean_response_len:.1f}")


if __name__ == "__main__":
    main()
