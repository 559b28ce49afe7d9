import pytest

from hubdispatch.env import DisruptionEnv
from hubdispatch.network import Network
from hubdispatch.scenario import RunConfig, build_scenario, data_dir


@pytest.fixture(scope="session")
def hub_net() -> Network:
    return Network.load(data_dir("xian"))


@pytest.fixture(scope="session")
def hub_cfg() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def hub_scenario(hub_net, hub_cfg):
    return build_scenario(hub_cfg, network=hub_net)


@pytest.fixture()
def hub_env(hub_scenario) -> DisruptionEnv:
    return DisruptionEnv(hub_scenario)


ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""

    def record(key: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE[key] = f"{'PASS' if passed else 'FAIL'} criterion {key}: {detail}"
        print(ACCEPTANCE[key])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split()[0][0]), k)):
            terminalreporter.write_line(ACCEPTANCE[key])
