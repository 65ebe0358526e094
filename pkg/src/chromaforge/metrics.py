"""Perturbation norms, success rates and transfer matrices."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import classifier

L0_THRESHOLD = 1e-9
CSV_COLUMNS = ["method", "model_src", "model_dst", "n", "success_pct", "l0_pct", "l2", "linf255", "mean_iters"]


@dataclass(frozen=True)
class PerturbationNorms:
    l0_percent: float
    l2: float
    linf_255: float


def perturbation_norms(original, adversarial, threshold: float = L0_THRESHOLD, spatial: bool = False) -> PerturbationNorms:
    """L0 as a percentage of changed coordinates, L2 in [0, 1] units, L-inf in [0, 255].

    With ``spatial=True`` L0 counts pixels with any changed channel instead.
    """
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(adversarial, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = b - a
    changed = np.abs(diff) > threshold
    if spatial:
        changed = changed.any(axis=-1)
    l0 = 100.0 * np.count_nonzero(changed) / changed.size if changed.size else 0.0
    l2 = math.sqrt(float(np.sum(diff * diff)))
    linf = 255.0 * float(np.max(np.abs(diff))) if diff.size else 0.0
    return PerturbationNorms(l0, l2, linf)


@dataclass
class TransferMatrix:
    models: list[str]
    success: list[list[float | None]]
    agreement_counts: list[list[int]]

    def rows(self, method: str = "") -> list[dict]:
        out = []
        for i, src in enumerate(self.models):
            for j, dst in enumerate(self.models):
                rate = self.success[i][j]
                out.append({
                    "method": method,
                    "model_src": src,
                    "model_dst": dst,
                    "n": self.agreement_counts[i][j],
                    "success_pct": "" if rate is None else rate,
                })
        return out


def transfer_matrix(models, attack, dataset, cfg=None, names=None, cache=None) -> TransferMatrix:
    """Success of attacks crafted on each row model, measured on each column model.

    ``attack(model, item, cfg)`` returns an AttackResult. An entry is computed
    only over images both models classify correctly; an empty subset gives
    ``None`` rather than 0. Adversarial images are crafted once per
    (source model, image) and reused across columns.
    """
    models = list(models)
    if len(models) < 1:
        raise ValueError("need at least one model")
    names = list(names) if names is not None else [f"model{i}" for i in range(len(models))]
    items = list(dataset)
    labels = np.array([it.label for it in items])
    images = np.stack([it.image for it in items])
    correct = [_predict_all(m, images) == labels for m in models]
    cache = {} if cache is None else cache

    def adversarial(i: int, k: int):
        key = (id(models[i]), k)
        if key not in cache:
            result = attack(models[i], items[k], cfg) if cfg is not None else attack(models[i], items[k])
            cache[key] = result.adversarial
        return cache[key]

    size = len(models)
    success: list[list[float | None]] = [[None] * size for _ in range(size)]
    counts = [[0] * size for _ in range(size)]
    for i in range(size):
        for j in range(size):
            subset = np.flatnonzero(correct[i] & correct[j])
            counts[i][j] = int(subset.size)
            if subset.size == 0:
                continue
            adv = np.stack([adversarial(i, int(k)) for k in subset])
            fooled = _predict_all(models[j], adv) != labels[subset]
            success[i][j] = 100.0 * float(np.mean(fooled))
    return TransferMatrix(names, success, counts)


def _predict_all(model, images: np.ndarray, chunk: int = 256) -> np.ndarray:
    out = [np.atleast_1d(classifier.forward(model, images[i : i + chunk]).label) for i in range(0, len(images), chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.intp)


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in CSV_COLUMNS})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.rows, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 10))
    return v


def summarize(results, originals=None, method: str | None = None, model_src: str = "", model_dst: str = "",
              threshold: float = L0_THRESHOLD, spatial: bool = False) -> dict:
    """Aggregate one (method, config) group of AttackResults into a report row.

    Results flagged as already misclassified are excluded from every mean.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to summarize")
    keep = [k for k, r in enumerate(results) if r.status != "already-misclassified"]
    if not keep:
        raise ValueError("every input was already misclassified")
    n = len(keep)
    row = {
        "method": method if method is not None else results[keep[0]].method,
        "model_src": model_src,
        "model_dst": model_dst or model_src,
        "n": n,
        "success_pct": 100.0 * sum(results[k].success for k in keep) / n,
        "mean_iters": sum(results[k].iterations_used for k in keep) / n,
    }
    if originals is not None:
        norms = [perturbation_norms(originals[k], results[k].adversarial, threshold, spatial) for k in keep]
        row["l0_pct"] = float(np.mean([p.l0_percent for p in norms]))
        row["l2"] = float(np.mean([p.l2 for p in norms]))
        row["linf255"] = float(np.mean([p.linf_255 for p in norms]))
    return row


def report(rows) -> EvalReport:
    return EvalReport(list(rows))


def norms_dict(p: PerturbationNorms) -> dict:
    return asdict(p)
