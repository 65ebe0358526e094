"""ACE against random search at several iteration budgets and piece counts."""

import argparse

from chromaforge import experiments
from chromaforge.attacks import AttackConfig

from _common import desk_models, eval_set, write_rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ace-budgets", default="50,100,500")
    parser.add_argument("--rs-budgets", default="500,1500,5000")
    parser.add_argument("--ks", default="8,64")
    parser.add_argument("--limit", type=int, default=100)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results/compare_search.csv")
    args = parser.parse_args()

    models, holdout = desk_models()
    items = eval_set(models["cnn"], holdout, args.limit)
    ace = [int(b) for b in args.ace_budgets.split(",")]
    rs = [int(b) for b in args.rs_budgets.split(",")]
    rows = []
    for K in (int(k) for k in args.ks.split(",")):
        rows += experiments.compare_search(models["cnn"], items, ace, rs, AttackConfig(K=K), jobs=args.jobs)
    for row in rows:
        print(f"{row['method']:>6} K={row['K']:<3} budget {row['budget']:>5}: {row['success_pct']:.1f}%")
    write_rows(args.out, rows, ["method", "K", "budget", "n", "success_pct"])


if __name__ == "__main__":
    main()
