import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


@pytest.fixture(autouse=True)
def _single_worker(monkeypatch):
    # worker count must never leak in from the environment
    monkeypatch.delenv("SOLBRANCH_THREADS", raising=False)
