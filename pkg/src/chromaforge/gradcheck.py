"""Central finite-difference checks for every analytic gradient in the package.

The checked functions are looked up on their modules at call time, so a test
can monkeypatch a broken gradient in and watch the check fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import classifier, colorfilter

STEP = 1e-6
TOLERANCE = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    trials: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def rel_error(analytic, numeric) -> float:
    a = np.ravel(np.asarray(analytic, dtype=np.float64))
    n = np.ravel(np.asarray(numeric, dtype=np.float64))
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def central_difference(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Numeric gradient of scalar ``f`` at ``x``, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = f(x)
        flat[i] = keep - step
        lo = f(x)
        flat[i] = keep
        out[i] = (hi - lo) / (2.0 * step)
    return grad


def _random_theta(rng, K) -> np.ndarray:
    return rng.dirichlet(np.ones(K), size=3)


def check_filter_theta(trials: int, rng, step: float = STEP, tolerance: float = TOLERANCE) -> CheckResult:
    worst = 0.0
    for t in range(trials):
        K = (2, 4, 8, 64)[t % 4]
        theta = _random_theta(rng, K)
        img = rng.uniform(0.0, 1.0, size=(4, 4, 3))
        weights = rng.normal(size=img.shape)

        def loss(th):
            return float(np.sum(weights * np.sin(3.0 * colorfilter.apply_curve(th, img))))

        out = colorfilter.apply_curve(theta, img)
        upstream = 3.0 * weights * np.cos(3.0 * out)
        analytic = colorfilter.filter_grad_theta(colorfilter.FilterParams(theta), img, upstream)
        worst = max(worst, rel_error(analytic, central_difference(loss, theta, step)))
    return CheckResult("filter_grad_theta", trials, worst, tolerance)


def check_deviation_penalty(trials: int, rng, step: float = STEP, tolerance: float = TOLERANCE) -> CheckResult:
    worst = 0.0
    for t in range(trials):
        K = (2, 4, 8, 64)[t % 4]
        theta = _random_theta(rng, K)
        _, analytic = colorfilter.deviation_penalty(colorfilter.FilterParams(theta), K)
        numeric = central_difference(lambda th: float(np.sum((th - 1.0 / K) ** 2)), theta, step)
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("deviation_penalty", trials, worst, tolerance)


def _small_models(seed: int) -> list[classifier.ClassifierModel]:
    L = classifier.LayerSpec
    mlp = [L("flatten"), L("dense", (8 * 8 * 3, 12)), L("relu"), L("dense", (12, 4)), L("softmax")]
    cnn = [
        L("conv3x3", (3, 4)), L("relu"), L("maxpool2x2"),
        L("flatten"), L("dense", (4 * 4 * 4, 4)), L("softmax"),
    ]
    return [classifier.init_model(mlp, (8, 8, 3), seed), classifier.init_model(cnn, (8, 8, 3), seed + 1)]


def _randomize_biases(model, rng) -> None:
    for ws in model.weights:
        if ws:
            ws[1][...] = rng.normal(scale=0.1, size=ws[1].shape)


def check_input_gradient(trials: int, rng, step: float = STEP, tolerance: float = TOLERANCE) -> CheckResult:
    worst = 0.0
    for t in range(trials):
        model = _small_models(int(rng.integers(1 << 30)))[t % 2]
        _randomize_biases(model, rng)
        img = rng.uniform(0.0, 1.0, size=(8, 8, 3))
        coeff = rng.normal(size=model.num_classes)
        analytic = classifier.input_gradient(model, img, coeff)
        numeric = central_difference(lambda x: float(coeff @ classifier.forward(model, x).logits), img, step)
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("input_gradient", trials, worst, tolerance)


def check_weight_gradient(trials: int, rng, step: float = STEP, tolerance: float = TOLERANCE) -> CheckResult:
    """Directional check: one random direction through all weights per trial."""
    worst = 0.0
    for t in range(trials):
        model = _small_models(int(rng.integers(1 << 30)))[t % 2]
        _randomize_biases(model, rng)
        images = rng.uniform(0.0, 1.0, size=(3, 8, 8, 3))
        labels = rng.integers(0, model.num_classes, size=3)
        _, grads = classifier.weight_gradient(model, (images, labels))
        params = [w for ws in model.weights for w in ws]
        flat_grads = [g for gs in grads for g in gs]
        directions = [rng.normal(size=p.shape) for p in params]

        def loss_at(s):
            saved = [p.copy() for p in params]
            for p, d in zip(params, directions):
                p += s * d
            probs = classifier.forward(model, images).probs
            for p, keep in zip(params, saved):
                p[...] = keep
            return classifier.cross_entropy(probs, labels) / len(labels)

        analytic = sum(float(np.sum(g * d)) for g, d in zip(flat_grads, directions))
        numeric = (loss_at(step) - loss_at(-step)) / (2.0 * step)
        worst = max(worst, rel_error([analytic], [numeric]))
    return CheckResult("weight_gradient", trials, worst, tolerance)


CHECKS = {
    "filter": (check_filter_theta, check_deviation_penalty),
    "classifier": (check_input_gradient, check_weight_gradient),
}


def run(module: str = "all", trials: int = 50, seed: int = 0, tolerance: float = TOLERANCE) -> list[CheckResult]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if module == "all":
        checks = CHECKS["filter"] + CHECKS["classifier"]
    elif module in CHECKS:
        checks = CHECKS[module]
    else:
        raise ValueError(f"unknown module {module!r}")
    rng = np.random.default_rng(seed)
    return [check(trials, rng, tolerance=tolerance) for check in checks]
