import numpy as np
import pytest

from nomascma.hetnet import ChannelState, NetworkConfig


def single_cell_state(gain, noise=1.0, p_max=10.0):
    """One BS serving every user; ``gain`` is (M, N)."""
    g = np.asarray(gain, dtype=float)[None]
    return ChannelState(gain=g, noise=noise, association=np.zeros(g.shape[1], dtype=int), p_max=[p_max])


def two_isolated_cells(g0, g1, noise=1.0, p_max=(10.0, 10.0)):
    """Two BSs with one user each on N subcarriers and no cross gain."""
    g0, g1 = np.asarray(g0, float), np.asarray(g1, float)
    gain = np.zeros((2, 2, g0.size))
    gain[0, 0], gain[1, 1] = g0, g1
    return ChannelState(gain=gain, noise=noise, association=[0, 1], p_max=p_max)


@pytest.fixture
def tiny_noma_cfg():
    return NetworkConfig(num_small_cells=0, users_per_bs=(3,), num_subcarriers=2, p_max=(10.0,))


@pytest.fixture
def tiny_scma_cfg():
    return NetworkConfig(num_small_cells=0, users_per_bs=(2,), num_subcarriers=4, p_max=(10.0,))


# acceptance summary: one line per criterion, from the test outcome

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    report = outcome.get_result()
    number, title = marker.args
    _, state, detail = _CRITERIA.get(number, (title, "PASS", ""))
    if report.failed:
        state = "FAIL"
    elif report.skipped:
        state = "SKIP"
    detail = dict(item.user_properties).get("detail", detail)
    _CRITERIA[number] = (title, state, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, state, detail = _CRITERIA[number]
        line = f"criterion {number:>2} {state}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
