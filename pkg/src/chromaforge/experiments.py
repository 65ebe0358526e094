"""Experiment drivers shared by the CLI and the scripts: sweeps, budget curves, transfer."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import attacks, metrics
from .colorfilter import FilterParams, deviation_penalty


def correct_subset(model, items, limit: int | None = None):
    """The first ``limit`` items ``model`` classifies correctly, in dataset order."""
    if limit is not None and limit <= 0:
        return []
    images = np.stack([it.image for it in items])
    labels = np.array([it.label for it in items])
    preds = metrics._predict_all(model, images)
    picked = [it for it, ok in zip(items, preds == labels) if ok]
    return picked if limit is None else picked[:limit]


def mean_penalty(results, final: bool = False) -> float:
    """Mean deviation penalty of the returned (or final) filter, summed over regions."""
    vals = []
    for r in results:
        if r.status == attacks.MISCLASSIFIED:
            continue
        thetas = r.final_theta if final else r.theta
        vals.append(sum(deviation_penalty(FilterParams(t))[0] for t in thetas))
    return float(np.mean(vals)) if vals else float("nan")


def sweep(model, items, param: str, values, cfg: attacks.AttackConfig, repeats: int = 1, jobs: int = 1):
    """Success and deviation of ACE over a grid of K or lambda values, one row per run."""
    if param not in ("K", "lambda"):
        raise ValueError("param must be 'K' or 'lambda'")
    values = list(values)
    if not values:
        raise ValueError("no values to sweep")
    rows = []
    for value in values:
        for rep in range(repeats):
            field = "K" if param == "K" else "lam"
            run_cfg = replace(cfg, **{field: int(value) if param == "K" else float(value)},
                              seed=attacks.derive_seed(cfg.seed, rep))
            results = attacks.attack_many(attacks.ace_attack, model, items, run_cfg, jobs=jobs)
            row = metrics.summarize(results, method="ace")
            row.update({
                "param": param,
                "value": value,
                "repeat": rep,
                "mean_penalty": mean_penalty(results),
                "mean_final_penalty": mean_penalty(results, final=True),
            })
            rows.append(row)
    return rows


def success_at_budgets(results, budgets) -> list[float]:
    """Success percentage for each budget, read off each run's first-success iteration.

    A run that first succeeds at iteration ``t`` succeeds for every budget
    ``b >= t`` and fails for smaller ones, because both attacks are
    deterministic and never discard a success; one run at the largest budget
    therefore answers every smaller one.
    """
    kept = [r for r in results if r.status != attacks.MISCLASSIFIED]
    if not kept:
        return [float("nan") for _ in budgets]
    firsts = [r.first_success_iter for r in kept]
    out = []
    for b in budgets:
        hits = sum(1 for f in firsts if f is not None and f <= b)
        out.append(100.0 * hits / len(kept))
    return out


def compare_search(model, items, ace_budgets, rs_budgets, cfg: attacks.AttackConfig, jobs: int = 1):
    """ACE vs random search success per iteration budget, on a shared image set."""
    ace_budgets = [int(b) for b in ace_budgets]
    rs_budgets = [int(b) for b in rs_budgets]
    if any(b < 0 for b in ace_budgets + rs_budgets):
        raise ValueError("budgets must be non-negative")
    rows = []
    for method, fn, budgets in (("ace", attacks.ace_attack, ace_budgets),
                                ("random", attacks.random_search_attack, rs_budgets)):
        top = max(budgets, default=0)
        if top == 0:
            rates = [0.0 for _ in budgets]
            n = len(items)
        else:
            results = attacks.attack_many(fn, model, items, replace(cfg, max_iters=top), jobs=jobs)
            rates = success_at_budgets(results, budgets)
            n = sum(1 for r in results if r.status != attacks.MISCLASSIFIED)
        for b, rate in zip(budgets, rates):
            rows.append({"method": method, "K": cfg.K, "budget": b, "n": n, "success_pct": rate})
    return rows


def transfer(models, names, items, attack, cfg, jobs: int = 1) -> metrics.TransferMatrix:
    """Transfer matrix; each source model's adversarial images are crafted once, in parallel.

    ``attack(model, item, cfg)`` must be a module-level function so worker
    processes can receive it. Per-image seeds follow the dataset index.
    """
    cache = {}
    images = np.stack([it.image for it in items])
    labels = np.array([it.label for it in items])
    for model in models:
        todo = [int(k) for k in np.flatnonzero(metrics._predict_all(model, images) == labels)]
        results = attacks.attack_many(attack, model, [items[k] for k in todo], cfg, jobs=jobs, indices=todo)
        for k, r in zip(todo, results):
            cache[(id(model), k)] = r.adversarial
    return metrics.transfer_matrix(models, _cached_only, items, names=names, cache=cache)


def _cached_only(model, item):
    raise RuntimeError("adversarial image missing from cache")
