import pytest
from hypothesis import HealthCheck, settings

from chromaforge import attacks, classifier, datagen, experiments

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record_criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        CRITERIA[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


@pytest.fixture(scope="session")
def synthetic():
    return datagen.generate_synthetic()


@pytest.fixture(scope="session")
def quick_model(synthetic):
    """A small MLP trained briefly; enough to make attacks meaningful in unit tests."""
    train, _ = synthetic
    model, _ = classifier.train(classifier.build("mlp-small", 6, seed=5), train, epochs=3, seed=5)
    return model


@pytest.fixture(scope="session")
def quick_items(quick_model, synthetic):
    return experiments.correct_subset(quick_model, synthetic[1], 12)


@pytest.fixture(scope="session")
def desk_models(synthetic):
    """cnn-small and an independently seeded mlp-small on the default synthetic set."""
    train, holdout = synthetic
    cnn, _ = classifier.train(classifier.build("cnn-small", 6, seed=1), train, epochs=8, seed=1)
    mlp, _ = classifier.train(classifier.build("mlp-small", 6, seed=2), train, epochs=8, seed=2)
    return {"cnn": cnn, "mlp": mlp}


@pytest.fixture(scope="session")
def eval_items(desk_models, synthetic):
    """The 100-image evaluation set: first holdout images cnn-small gets right."""
    items = experiments.correct_subset(desk_models["cnn"], synthetic[1], 100)
    assert len(items) == 100
    return items


@pytest.fixture(scope="session")
def ace_runs(desk_models, eval_items):
    """Memoized batch runs keyed by (model name, attack name, config)."""
    cache = {}
    fns = {"ace": attacks.ace_attack, "random": attacks.random_search_attack}

    def run(model_name: str, method: str, cfg: attacks.AttackConfig):
        key = (model_name, method, cfg)
        if key not in cache:
            cache[key] = attacks.attack_many(fns[method], desk_models[model_name], eval_items, cfg)
        return cache[key]

    return run
