import sys

import numpy as np
import pytest

from hazardlab.pipeline import compute_returns, default_recessions, extract_spells, load_series
from hazardlab.simulate import simulate_price_csv


@pytest.fixture(scope="session")
def synthetic_prices(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "prices.csv"
    path.write_text(simulate_price_csv(seed=7), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def synthetic_spells(synthetic_prices):
    returns = compute_returns(load_series(synthetic_prices))
    return extract_spells(returns, default_recessions())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
