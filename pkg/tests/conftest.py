import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import faulttwin.explain as explain
from faulttwin.gbdt import GbdtParams, fit
from faulttwin.sim import generate_dataset
from faulttwin.dataset import split

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

EFFICIENCY_TOL = 1e-9
# every explanation built anywhere in the session: (max gap, n explanations)
EFFICIENCY_LOG: list[float] = []


@pytest.fixture(autouse=True)
def _efficiency_guard(monkeypatch):
    """Check base + sum(phi) == margin on every explanation the library builds."""
    original = explain._assemble

    def checked(model, x, base, phi):
        out = original(model, x, base, phi)
        raw = model.raw_margin(x)
        for e, r in zip(out, raw):
            gap = float(np.max(np.abs(e.margins() - r)))
            EFFICIENCY_LOG.append(gap)
            assert gap <= EFFICIENCY_TOL, f"efficiency identity violated by {gap:.3g}"
        return out

    monkeypatch.setattr(explain, "_assemble", checked)
    yield


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(n_rows=3000, seed=3)


@pytest.fixture(scope="session")
def small_split(small_dataset):
    return split(small_dataset, (8, 1, 1), seed=0)


@pytest.fixture(scope="session")
def small_model(small_split):
    train, valid, _ = small_split
    return fit(train, valid, GbdtParams(num_boost_rounds=15, num_leaves=8), seed=0, n_classes=5)


# (criterion, title, passed, detail) from tests/test_acceptance.py
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if EFFICIENCY_LOG:
        terminalreporter.write_line(
            f"efficiency identity: {len(EFFICIENCY_LOG)} explanations checked, "
            f"max gap {max(EFFICIENCY_LOG):.3g} (tolerance {EFFICIENCY_TOL:g})")
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
