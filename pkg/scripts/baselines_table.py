"""Success rate and perturbation norms of every attack against cnn-small."""

import argparse

from chromaforge import attacks, lp_baselines, metrics
from chromaforge.attacks import AttackConfig

from _common import desk_models, eval_set, write_rows

RUNS = [
    ("fgsm", lp_baselines.fgsm_attack, lp_baselines.PRESETS["fgsm"]),
    ("bim", lp_baselines.bim, lp_baselines.PRESETS["bim"]),
    ("cw", lp_baselines.cw_l2, lp_baselines.PRESETS["cw"]),
    ("ace", attacks.ace_attack, AttackConfig()),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--limit", type=int, default=100)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results/baselines.csv")
    args = parser.parse_args()

    models, holdout = desk_models()
    items = eval_set(models["cnn"], holdout, args.limit)
    originals = [it.image for it in items]
    rows = []
    for name, fn, cfg in RUNS:
        results = attacks.attack_many(fn, models["cnn"], items, cfg, jobs=args.jobs)
        row = metrics.summarize(results, originals, method=name, model_src="cnn")
        print(f"{name:>5}: success {row['success_pct']:5.1f}%  L0 {row['l0_pct']:6.2f}%  "
              f"L2 {row['l2']:.3f}  Linf {row['linf255']:.2f}/255")
        rows.append(row)
    write_rows(args.out, rows, metrics.CSV_COLUMNS)


if __name__ == "__main__":
    main()
