"""Filter-space attacks: ACE, its style-guided and semantic variants, and random search.

All three gradient attacks share one optimization loop over a list of
filter parameter sets. Plain ACE is the single-region case of the semantic
attack, which is why the two agree bit-for-bit on a one-region mask.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import classifier
from .colorfilter import (
    PROJECTIONS,
    FilterParams,
    apply_curve,
    apply_filter,
    deviation_penalty,
    filter_grad_theta,
    identity,
    project_simplex,
    style_preset,
)
from .optim import Adam
from .tensorcore import LabeledImage

SUCCESS = "success"
FAILURE = "failure"
MISCLASSIFIED = "already-misclassified"


@dataclass(frozen=True)
class AttackConfig:
    K: int = 64
    lam: float = 5.0
    kappa: float = 0.0
    max_iters: int = 500
    learning_rate: float = 0.01
    early_stop_patience: int = 50
    min_improvement: float = 1e-4
    seed: int = 0
    loss: str = "cw"
    shared_channels: bool = False
    rs_project: bool = True
    rs_chunk: int = 64
    projection: str = "euclidean"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.loss not in ("cw", "ce"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.projection not in PROJECTIONS:
            raise ValueError(f"unknown projection {self.projection!r}; choose from {sorted(PROJECTIONS)}")


@dataclass
class AttackResult:
    method: str
    adversarial: np.ndarray
    theta: list[np.ndarray]
    success: bool
    status: str
    iterations_used: int
    loss_trace: list[tuple[float, float]]
    label: int
    predicted_label_before: int
    predicted_label_after: int
    first_success_iter: int | None = None
    final_theta: list[np.ndarray] | None = None
    extra: dict = field(default_factory=dict)

    @property
    def params(self) -> FilterParams:
        return FilterParams(self.theta[0])

    def to_json(self, original: np.ndarray | None = None) -> dict:
        from .metrics import perturbation_norms

        doc = {
            "method": self.method,
            "status": self.status,
            "success": self.success,
            "iterations": self.iterations_used,
            "first_success_iter": self.first_success_iter,
            "label": self.label,
            "predicted_label_before": self.predicted_label_before,
            "predicted_label_after": self.predicted_label_after,
            "params": [{"K": int(t.shape[1]), "theta": t.tolist()} for t in self.theta],
            "loss_trace": [list(p) for p in self.loss_trace],
        }
        if original is not None:
            doc["norms"] = asdict(perturbation_norms(original, self.adversarial))
        doc.update(self.extra)
        return doc


@dataclass(frozen=True)
class SemanticMask:
    regions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        regions = np.asarray(self.regions, dtype=np.intp)
        weights = np.asarray(self.weights, dtype=np.float64)
        if regions.ndim != 2:
            raise ValueError("regions must be an H x W integer array")
        if weights.ndim != 1 or len(weights) < 1:
            raise ValueError("need at least one region weight")
        if regions.min() < 0 or regions.max() >= len(weights):
            raise ValueError(f"region indices must lie in [0, {len(weights)})")
        if weights.min() < 0 or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("region weights must lie on the simplex")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "weights", weights)

    @property
    def n_regions(self) -> int:
        return len(self.weights)

    @classmethod
    def uniform(cls, shape) -> "SemanticMask":
        return cls(np.zeros(shape, dtype=np.intp), np.array([1.0]))

    @classmethod
    def load(cls, mask_path, weights_path) -> "SemanticMask":
        from .tensorcore import load_mask

        with open(weights_path) as fh:
            weights = json.load(fh)
        if isinstance(weights, dict):
            weights = weights["weights"]
        return cls(load_mask(mask_path), np.array(weights, dtype=np.float64))


class AttackError(ValueError):
    pass


def cw_loss(logits, true_label: int, kappa: float = 0.0) -> tuple[float, np.ndarray]:
    """Margin loss ``max(Z_l - max_{i != l} Z_i, -kappa)`` and its subgradient."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.shape[-1]
    if m < 2:
        raise AttackError("the margin loss needs at least two classes")
    if not 0 <= true_label < m:
        raise AttackError(f"label {true_label} out of range")
    others = z.copy()
    others[true_label] = -np.inf
    runner_up = int(np.argmax(others))
    margin = z[true_label] - z[runner_up]
    grad = np.zeros(m)
    if margin < -kappa:
        return -float(kappa), grad
    grad[true_label] = 1.0
    grad[runner_up] = -1.0
    return float(margin), grad


def neg_cross_entropy(logits, true_label: int) -> tuple[float, np.ndarray]:
    """Negated cross-entropy, so that minimizing it pushes away from the label."""
    probs = classifier.softmax(np.asarray(logits, dtype=np.float64))
    loss = -classifier.cross_entropy(probs, true_label)
    return loss, -classifier.cross_entropy_logit_grad(probs, true_label)


def _adv_loss(cfg: AttackConfig, logits, label):
    if cfg.loss == "cw":
        return cw_loss(logits, label, cfg.kappa)
    return neg_cross_entropy(logits, label)


def derive_seed(global_seed: int, index: int) -> int:
    """Per-image seed independent of scheduling order."""
    return int(np.random.SeedSequence([int(global_seed), int(index)]).generate_state(1)[0])


def _precheck(model, item: LabeledImage, method: str, K: int | None) -> AttackResult | None:
    x = np.asarray(item.image, dtype=np.float64)
    before = classifier.predict(model, x)
    if before == item.label:
        return None
    return AttackResult(
        method=method,
        adversarial=x.copy(),
        theta=[np.full((3, K), 1.0 / K)] if K else [],
        success=False,
        status=MISCLASSIFIED,
        iterations_used=0,
        loss_trace=[],
        label=item.label,
        predicted_label_before=before,
        predicted_label_after=before,
    )


def _composite(thetas: list[np.ndarray], x: np.ndarray, masks: list[np.ndarray] | None) -> np.ndarray:
    if masks is None:
        return apply_filter(FilterParams(thetas[0]), x)
    out = np.empty_like(x)
    for theta, sel in zip(thetas, masks):
        out[sel] = apply_filter(FilterParams(theta), x)[sel]
    return out


def _optimize(model, item: LabeledImage, cfg: AttackConfig, method: str, *,
              mask: SemanticMask | None = None, target: np.ndarray | None = None) -> AttackResult:
    """Shared Adam loop over one filter per semantic region."""
    skipped = _precheck(model, item, method, cfg.K)
    if skipped is not None:
        return skipped
    x = np.asarray(item.image, dtype=np.float64)
    label = item.label
    lam = float(cfg.lam)
    K = cfg.K

    if mask is None:
        mask = SemanticMask.uniform(x.shape[:2])
    if mask.regions.shape != x.shape[:2]:
        raise AttackError(f"mask shape {mask.regions.shape} does not match image {x.shape[:2]}")
    n = mask.n_regions
    weights = mask.weights
    region_sel = [mask.regions == r for r in range(n)]
    masks = None if n == 1 else region_sel
    up_masks = [sel[..., None] for sel in region_sel]

    thetas = [identity(K).theta.copy() for _ in range(n)]
    opt = Adam(lr=cfg.learning_rate)
    project = PROJECTIONS[cfg.projection]

    def regularizer(adv):
        if target is not None:
            diff = adv - target
            return float(np.sum(diff * diff)), 2.0 * diff, None
        total = 0.0
        grads = []
        for w, theta in zip(weights, thetas):
            pen, g = deviation_penalty(FilterParams(theta), K)
            total += w * pen
            grads.append(w * g)
        return total, None, grads

    def evaluate():
        adv = _composite(thetas, x, masks)
        trace = classifier.forward(model, adv)
        adv_loss, g_logits = _adv_loss(cfg, trace.logits, label)
        reg, reg_pixel_grad, reg_theta_grads = regularizer(adv)
        return adv, trace, adv_loss, g_logits, reg, reg_pixel_grad, reg_theta_grads

    state = evaluate()
    loss_trace: list[tuple[float, float]] = []
    best = None  # (reg, iteration, thetas, adv, label)
    first_success = None
    best_total = state[2] + lam * state[4]
    stall = 0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        adv, trace, _, g_logits, _, reg_pixel_grad, reg_theta_grads = state
        upstream = classifier.input_gradient(model, adv, g_logits, trace)
        if reg_pixel_grad is not None:
            upstream = upstream + lam * reg_pixel_grad
        grads = []
        for r in range(n):
            up = upstream if n == 1 else upstream * up_masks[r]
            g = filter_grad_theta(FilterParams(thetas[r]), x, up)
            if reg_theta_grads is not None:
                g = g + lam * reg_theta_grads[r]
            if cfg.shared_channels:
                g = np.broadcast_to(g.sum(axis=0), g.shape).copy()
            grads.append(g)
        opt.step(thetas, grads)
        for r in range(n):
            thetas[r][...] = project(thetas[r]).theta

        state = evaluate()
        adv, trace, adv_loss, _, reg, _, _ = state
        total = adv_loss + lam * reg
        loss_trace.append((adv_loss, lam * reg))
        pred = int(np.argmax(trace.probs))
        if pred != label:
            if first_success is None:
                first_success = it
            if best is None or reg < best[0]:
                best = (reg, it, [t.copy() for t in thetas], adv, pred)
        if total < best_total - cfg.min_improvement:
            best_total = total
            stall = 0
        else:
            stall += 1
        if first_success is not None and stall >= cfg.early_stop_patience:
            break

    if best is not None:
        _, best_it, out_thetas, out_adv, after = best
    else:
        best_it = it
        out_thetas = [t.copy() for t in thetas]
        out_adv = state[0]
        after = int(np.argmax(state[1].probs))
    return AttackResult(
        method=method,
        adversarial=out_adv,
        theta=out_thetas,
        success=after != label,
        status=SUCCESS if after != label else FAILURE,
        iterations_used=it,
        loss_trace=loss_trace,
        label=label,
        predicted_label_before=label,
        predicted_label_after=after,
        first_success_iter=first_success,
        final_theta=[t.copy() for t in thetas],
        extra={"selected_iter": best_it, "lambda": lam, "K": K},
    )


def ace_attack(model, item: LabeledImage, cfg: AttackConfig = AttackConfig()) -> AttackResult:
    """Minimize ``f(F_theta(x)) + lam * sum (theta - 1/K)^2`` over the filter."""
    return _optimize(model, item, cfg, "ace")


def style_guided_attack(model, item: LabeledImage, target: np.ndarray, cfg: AttackConfig = AttackConfig()) -> AttackResult:
    """ACE with the penalty replaced by ``||F_theta(x) - target||^2``."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != np.shape(item.image):
        raise AttackError(f"target shape {target.shape} does not match image {np.shape(item.image)}")
    return _optimize(model, item, cfg, "ace-style", target=target)


def style_preset_attack(model, item: LabeledImage, cfg: AttackConfig = AttackConfig(), preset: str = "warm") -> AttackResult:
    """Style-guided attack whose target is the image rendered through a built-in look."""
    target = apply_filter(style_preset(preset, cfg.K), item.image)
    return style_guided_attack(model, item, target, cfg)


def style_target_attack(model, item: LabeledImage, cfg: AttackConfig, target: np.ndarray) -> AttackResult:
    """``style_guided_attack`` with the config first, as batch runners call it."""
    return style_guided_attack(model, item, target, cfg)


def semantic_mask_attack(model, item: LabeledImage, cfg: AttackConfig, mask: SemanticMask) -> AttackResult:
    """``semantic_attack`` with the config first, as batch runners call it."""
    return semantic_attack(model, item, mask, cfg)


def semantic_attack(model, item: LabeledImage, mask: SemanticMask, cfg: AttackConfig = AttackConfig()) -> AttackResult:
    """One filter per mask region, penalties weighted by the region weights."""
    return _optimize(model, item, cfg, "ace-semantic", mask=mask)


def random_search_attack(model, item: LabeledImage, cfg: AttackConfig = AttackConfig()) -> AttackResult:
    """Sample theta uniformly from [0, 1] until the filtered image is misclassified.

    Samples are drawn and evaluated in fixed-size chunks so the outcome for a
    given seed does not depend on ``max_iters``.
    """
    skipped = _precheck(model, item, "random", cfg.K)
    if skipped is not None:
        return skipped
    x = np.asarray(item.image, dtype=np.float64)
    label = item.label
    K = cfg.K
    rng = np.random.default_rng(cfg.seed)
    chunk = max(1, int(cfg.rs_chunk))
    last = None
    for start in range(0, cfg.max_iters, chunk):
        raw = rng.uniform(0.0, 1.0, size=(chunk, 3, K))
        count = min(chunk, cfg.max_iters - start)
        thetas = [_rs_theta(raw[i], cfg) for i in range(chunk)]
        batch = np.stack([_rs_apply(t, x, cfg) for t in thetas])
        preds = classifier.forward(model, batch).label
        hits = np.flatnonzero(preds[:count] != label)
        if hits.size:
            i = int(hits[0])
            return AttackResult(
                method="random", adversarial=batch[i], theta=[thetas[i]], success=True, status=SUCCESS,
                iterations_used=start + i + 1, loss_trace=[], label=label, predicted_label_before=label,
                predicted_label_after=int(preds[i]), first_success_iter=start + i + 1,
            )
        last = (batch[count - 1], thetas[count - 1], int(preds[count - 1]))
    adv, theta, after = last
    return AttackResult(
        method="random", adversarial=adv, theta=[theta], success=False, status=FAILURE,
        iterations_used=cfg.max_iters, loss_trace=[], label=label, predicted_label_before=label,
        predicted_label_after=after,
    )


def _rs_theta(raw: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.shared_channels:
        raw = np.broadcast_to(raw[0], raw.shape)
    if cfg.rs_project:
        return project_simplex(raw).theta
    return np.array(raw)


def _rs_apply(theta: np.ndarray, x: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.rs_project:
        return apply_filter(FilterParams(theta), x)
    return np.clip(apply_curve(theta, x), 0.0, 1.0)


def _run_one(args):
    fn, model, item, cfg, kwargs = args
    return fn(model, item, cfg, **kwargs)


def attack_many(fn, model, items: list[LabeledImage], cfg, *, jobs: int = 1, seed_per_image: bool = True,
                indices=None, **kwargs):
    """Attack each item independently; results come back in input order.

    Item ``i`` runs with seed ``derive_seed(cfg.seed, indices[i])`` (``indices``
    defaults to positions), so results do not depend on ``jobs``.
    """
    indices = range(len(items)) if indices is None else list(indices)
    tasks = []
    for i, item in zip(indices, items):
        c = replace(cfg, seed=derive_seed(cfg.seed, i)) if seed_per_image else cfg
        tasks.append((fn, model, item, c, kwargs))
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_one(t) for t in tasks]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(min(jobs, len(tasks))) as pool:
        return pool.map(_run_one, tasks, chunksize=max(1, math.ceil(len(tasks) / (4 * jobs))))
