import numpy as np
import pytest

from kfl.system_model import ChannelModel, DeviceProfile, PayloadSpec


def make_profile(id=0, samples=600, cpu_freq=1.2e9, flops=553406.0, max_power=1.0,
                 budget=1.0, distance=50.0, **kw) -> DeviceProfile:
    counts = samples if isinstance(samples, (list, np.ndarray)) else [samples]
    return DeviceProfile(id, counts, cpu_freq, flops, max_power, budget, distance, **kw)


@pytest.fixture
def model() -> ChannelModel:
    return ChannelModel()


@pytest.fixture
def payload() -> PayloadSpec:
    return PayloadSpec.for_knowledge(10, 64)


# one line per acceptance criterion, echoed at the end of the pytest run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
