"""Pixel-space baselines bounded in an L_p norm: FGSM, BIM and C&W L2."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import classifier
from .attacks import FAILURE, SUCCESS, AttackResult, _precheck, cw_loss
from .optim import Adam
from .tensorcore import LabeledImage

CW_NUDGE = 1e-6


@dataclass(frozen=True)
class LpConfig:
    epsilon: float = 2.0 / 255.0
    alpha: float | None = None  # None means epsilon / 5
    iterations: int = 10
    kappa: float = 40.0
    cw_search_steps: int = 3
    cw_inner_iters: int = 100
    learning_rate: float = 0.01
    initial_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.step_size <= self.epsilon:
            raise ValueError("alpha must satisfy 0 < alpha <= epsilon")
        if self.iterations < 1 or self.cw_search_steps < 1 or self.cw_inner_iters < 1:
            raise ValueError("iteration counts must be positive")
        if self.learning_rate <= 0 or self.initial_lambda <= 0:
            raise ValueError("learning_rate and initial_lambda must be positive")

    @property
    def step_size(self) -> float:
        return self.epsilon / 5.0 if self.alpha is None else float(self.alpha)


# Settings used for the pixel-space baselines in the reference evaluation.
PRESETS = {
    "fgsm": LpConfig(alpha=2.0 / 255.0, iterations=1),
    "bim": LpConfig(),
    "cw": LpConfig(),
}


def _finish(model, method: str, item: LabeledImage, adv: np.ndarray, iterations: int,
            trace: list, extra: dict | None = None) -> AttackResult:
    after = int(classifier.predict(model, adv))
    ok = after != item.label
    return AttackResult(
        method=method, adversarial=adv, theta=[], success=ok, status=SUCCESS if ok else FAILURE,
        iterations_used=iterations, loss_trace=trace, label=item.label,
        predicted_label_before=item.label, predicted_label_after=after, extra=dict(extra or {}),
    )


def _ce_input_gradient(model, x: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    trace = classifier.forward(model, x)
    loss = classifier.cross_entropy(trace.probs, label)
    g_logits = classifier.cross_entropy_logit_grad(trace.probs, label)
    return loss, classifier.input_gradient(model, x, g_logits, trace)


def _within_bound(x: np.ndarray, adv: np.ndarray, eps: float) -> np.ndarray:
    """Nudge values by one ulp until |adv - x| <= eps holds in floating point."""
    adv = adv.copy()
    for _ in range(4):
        over = adv - x > eps
        under = x - adv > eps
        if not (over.any() or under.any()):
            break
        adv[over] = np.nextafter(adv[over], -np.inf)
        adv[under] = np.nextafter(adv[under], np.inf)
    return adv


def _sign_steps(model, item: LabeledImage, eps: float, alpha: float, iterations: int, method: str) -> AttackResult:
    skipped = _precheck(model, item, method, None)
    if skipped is not None:
        return skipped
    x = np.asarray(item.image, dtype=np.float64)
    adv = x.copy()
    trace = []
    for _ in range(iterations):
        loss, grad = _ce_input_gradient(model, adv, item.label)
        trace.append((loss, float(np.max(np.abs(adv - x)))))
        adv = adv + alpha * np.sign(grad)
        adv = np.clip(adv, x - eps, x + eps)
        adv = np.clip(adv, 0.0, 1.0)
        adv = _within_bound(x, adv, eps)
    return _finish(model, method, item, adv, iterations, trace, {"epsilon": eps, "alpha": alpha})


def fgsm(model, item: LabeledImage, epsilon: float = 2.0 / 255.0) -> AttackResult:
    """One signed-gradient step of size epsilon on the cross-entropy loss."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    return _sign_steps(model, item, float(epsilon), float(epsilon), 1, "fgsm")


def bim(model, item: LabeledImage, cfg: LpConfig = PRESETS["bim"]) -> AttackResult:
    """Iterated FGSM with step alpha, projected back into the epsilon ball each step."""
    return _sign_steps(model, item, cfg.epsilon, cfg.step_size, cfg.iterations, "bim")


def _to_pixels(x: np.ndarray, a: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tanh reparameterization, offset so that w = 0 returns x exactly."""
    t = np.tanh(a + w)
    raw = x + 0.5 * (t - np.tanh(a))
    adv = np.clip(raw, 0.0, 1.0)
    slope = 0.5 * (1.0 - t * t) * ((raw >= 0.0) & (raw <= 1.0))
    return adv, slope


def cw_l2(model, item: LabeledImage, cfg: LpConfig = PRESETS["cw"]) -> AttackResult:
    """Minimize ``||x' - x||^2 + lam * f(x')`` over w, searching lam between rounds.

    lam starts at ``initial_lambda``; it is multiplied by 10 after a failed
    round and divided by 10 after a successful one until both a failing and a
    succeeding value are known, then bisected. The lowest-L2 successful image
    across all rounds is returned.
    """
    skipped = _precheck(model, item, "cw", None)
    if skipped is not None:
        return skipped
    x = np.asarray(item.image, dtype=np.float64)
    label = item.label
    a = np.arctanh(2.0 * np.clip(x, CW_NUDGE, 1.0 - CW_NUDGE) - 1.0)
    lam = cfg.initial_lambda
    lo, hi = None, None
    best_l2, best_adv = np.inf, None
    trace = []
    lambdas = []
    for _ in range(cfg.cw_search_steps):
        lambdas.append(lam)
        w = np.zeros_like(x)
        opt = Adam(lr=cfg.learning_rate)
        round_ok = False
        for _ in range(cfg.cw_inner_iters):
            adv, slope = _to_pixels(x, a, w)
            tr = classifier.forward(model, adv)
            f, g_logits = cw_loss(tr.logits, label, cfg.kappa)
            diff = adv - x
            l2sq = float(np.sum(diff * diff))
            trace.append((f, l2sq))
            if int(np.argmax(tr.probs)) != label:
                round_ok = True
                if l2sq < best_l2:
                    best_l2, best_adv = l2sq, adv
            g_pix = 2.0 * diff + lam * classifier.input_gradient(model, adv, g_logits, tr)
            opt.step([w], [g_pix * slope])
        # the final step's image is evaluated too
        adv, _ = _to_pixels(x, a, w)
        if classifier.predict(model, adv) != label:
            round_ok = True
            l2sq = float(np.sum((adv - x) ** 2))
            if l2sq < best_l2:
                best_l2, best_adv = l2sq, adv
        if round_ok:
            hi = lam
            lam = (lo + hi) / 2.0 if lo is not None else lam / 10.0
        else:
            lo = lam
            lam = (lo + hi) / 2.0 if hi is not None else lam * 10.0
    out = best_adv if best_adv is not None else adv
    iters = cfg.cw_search_steps * cfg.cw_inner_iters
    return _finish(model, "cw", item, out, iters, trace, {"lambdas": lambdas, "kappa": cfg.kappa})


def fgsm_attack(model, item: LabeledImage, cfg: LpConfig = PRESETS["fgsm"]) -> AttackResult:
    """FGSM driven by an LpConfig, for batch runners that pass a config."""
    return fgsm(model, item, cfg.epsilon)


METHODS = {"fgsm": fgsm_attack, "bim": bim, "cw": cw_l2}
