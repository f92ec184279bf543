import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _acceptance_module():
    import sys

    return sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")


def pytest_runtest_setup(item):
    if item.module.__name__.endswith("test_acceptance"):
        tr = item.config.pluginmanager.get_plugin("terminalreporter")
        if tr is not None:
            item.module.REPORT["write"] = lambda line: (tr.write_line(""), tr.write_line(line))


def pytest_terminal_summary(terminalreporter):
    mod = _acceptance_module()
    if mod is not None and mod.REPORT["lines"]:
        terminalreporter.section("acceptance criteria")
        for line in mod.REPORT["lines"]:
            terminalreporter.write_line(line)
