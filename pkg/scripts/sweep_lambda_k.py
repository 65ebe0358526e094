"""Success rate and filter deviation of ACE over lambda and K on the cnn evaluation set."""

import argparse

from chromaforge import experiments
from chromaforge.attacks import AttackConfig

from _common import desk_models, eval_set, write_rows

COLUMNS = ["param", "value", "n", "success_pct", "mean_iters", "mean_penalty", "mean_final_penalty"]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--lambdas", default="0,1,5,10")
    parser.add_argument("--ks", default="2,8,64")
    parser.add_argument("--limit", type=int, default=100)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results/sweep.csv")
    args = parser.parse_args()

    models, holdout = desk_models()
    items = eval_set(models["cnn"], holdout, args.limit)
    rows = experiments.sweep(models["cnn"], items, "lambda", [float(v) for v in args.lambdas.split(",")],
                             AttackConfig(K=64), jobs=args.jobs)
    rows += experiments.sweep(models["cnn"], items, "K", [int(v) for v in args.ks.split(",")],
                              AttackConfig(lam=5.0), jobs=args.jobs)
    for row in rows:
        print(f"{row['param']}={row['value']}: {row['success_pct']:.1f}% penalty {row['mean_penalty']:.5f}")
    write_rows(args.out, rows, COLUMNS)


if __name__ == "__main__":
    main()
