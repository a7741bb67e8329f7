import pytest

from mmrgraph import DESK, SynthConfig, synth_generate
from mmrgraph.core import make_rng
from mmrgraph.data import stack_bundles


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    """Four classes, twelve samples each, some without text."""
    return synth_generate(SynthConfig(num_classes=4, samples_per_class=12, fraction_with_text=0.75, seed=3))


@pytest.fixture(scope="session")
def small_batch(small_dataset):
    return stack_bundles(small_dataset.bundles[:6], DESK)


ACCEPTANCE_TITLES = {
    1: "gradient integrity",
    2: "equation oracles",
    3: "metric oracle",
    4: "component ordering",
    5: "with-text vs without-text",
    6: "overfit sanity",
    7: "optimizer correctness",
    8: "determinism",
    9: "structural invariants",
    10: "format fidelity",
}
_verdicts: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record one acceptance outcome, then assert it."""

    def record(number: int, ok: bool, detail: str):
        _verdicts[number] = (bool(ok), detail)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in ACCEPTANCE_TITLES.items():
        if number in _verdicts:
            ok, detail = _verdicts[number]
            line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}"
        else:
            line = f"[FAIL] {number:2d}. {title}: did not complete (error or not selected)"
        terminalreporter.write_line(line)
