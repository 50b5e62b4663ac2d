import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# filled by tests/test_acceptance.py: criterion number -> (passed, detail)
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


import pytest  # noqa: E402

from osp_pipeline.forest import ForestParams  # noqa: E402
from osp_pipeline.pipeline import train_bundle  # noqa: E402
from osp_pipeline.synthetic import CorpusSpec, generate_corpus  # noqa: E402

SMALL_SPEC = CorpusSpec(
    {"singleton_cephalic": 14, "singleton_breech": 10, "twin_discordant": 10, "twin_same_presentation": 6},
    seed=7,
    frames_per_sweep=(80, 160),
    max_masks=4,
)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SMALL_SPEC)


@pytest.fixture(scope="session")
def trained_bundle(small_corpus):
    return train_bundle(small_corpus, ForestParams(n_trees=25, seed=1))
