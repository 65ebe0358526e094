"""Helpers shared by the experiment scripts: desk-scale models and the evaluation set."""

import csv
from pathlib import Path

from chromaforge import classifier, datagen, experiments


def desk_models(epochs=8):
    """cnn-small (seed 1) and mlp-small (seed 2) trained on the default synthetic set."""
    train, holdout = datagen.generate_synthetic()
    cnn, _ = classifier.train(classifier.build("cnn-small", 6, seed=1), train, epochs=epochs, seed=1)
    mlp, _ = classifier.train(classifier.build("mlp-small", 6, seed=2), train, epochs=epochs, seed=2)
    return {"cnn": cnn, "mlp": mlp}, holdout


def eval_set(model, holdout, n=100):
    return experiments.correct_subset(model, holdout, n)


def write_rows(path, rows, columns):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {path}")
