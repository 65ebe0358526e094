"""White-box and transfer success of ACE and the pixel-space baselines between cnn and mlp."""

import argparse

from chromaforge import attacks, experiments, lp_baselines
from chromaforge.attacks import AttackConfig

from _common import desk_models, write_rows

METHODS = {
    "ace": (attacks.ace_attack, AttackConfig()),
    "fgsm": (lp_baselines.fgsm_attack, lp_baselines.PRESETS["fgsm"]),
    "bim": (lp_baselines.bim, lp_baselines.PRESETS["bim"]),
    "cw": (lp_baselines.cw_l2, lp_baselines.PRESETS["cw"]),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--methods", default="ace,fgsm,bim,cw")
    parser.add_argument("--limit", type=int, default=100, help="holdout images considered")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results/transfer.csv")
    args = parser.parse_args()

    models, holdout = desk_models()
    names = list(models)
    items = holdout[: args.limit]
    rows = []
    for method in args.methods.split(","):
        fn, cfg = METHODS[method]
        tm = experiments.transfer([models[n] for n in names], names, items, fn, cfg, jobs=args.jobs)
        for i, src in enumerate(names):
            cells = ["  n/a" if v is None else f"{v:5.1f}" for v in tm.success[i]]
            print(f"{method:>5} from {src}: " + " ".join(cells))
        rows += tm.rows(method)
    write_rows(args.out, rows, ["method", "model_src", "model_dst", "n", "success_pct"])


if __name__ == "__main__":
    main()
