import numpy as np
import pytest

from glucolens.ingest import CgmTrace


def make_trace(start, values, step_min=15, pid="P1"):
    start = np.datetime64(start, "m")
    times = start + np.arange(len(values)) * np.timedelta64(step_min, "m")
    return CgmTrace.from_arrays(pid, times, values)


@pytest.fixture
def trace_factory():
    return make_trace


@pytest.fixture(scope="session")
def small_cohort():
    from glucolens.synth import SynthCohortSpec, synth_cohort

    return synth_cohort(SynthCohortSpec(n_participants=3, seed=11))


@pytest.fixture(scope="session")
def small_matrix(small_cohort):
    from glucolens.features import build_feature_matrix

    return build_feature_matrix(small_cohort, "all")[0]


@pytest.fixture(scope="session")
def cohort_matrix():
    """Default 10-participant synthetic cohort, feature set All."""
    from glucolens.features import build_feature_matrix
    from glucolens.synth import SynthCohortSpec, synth_cohort

    return build_feature_matrix(synth_cohort(SynthCohortSpec()), "all")[0]


class NetworkBlocked(RuntimeError):
    pass


def _refuse(*args, **kwargs):
    raise NetworkBlocked("tests run offline; outbound connections are refused")


@pytest.fixture(scope="session", autouse=True)
def no_network():
    """Every test runs with outbound socket connections disabled."""
    import socket

    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(socket.socket, "connect", _refuse)
        mp.setattr(socket.socket, "connect_ex", _refuse)
        mp.setattr(socket, "create_connection", _refuse)
        yield


# -- acceptance summary ---------------------------------------------------

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "ran": False})
    entry["seconds"] += rep.duration
    if rep.failed:
        entry["ok"] = False
    if rep.when == "call":
        entry["ran"] = True


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {e['title']}  ({e['seconds']:.1f} s)")
    terminalreporter.write_line("times include fixture setup; a shared fixture is charged to the first test using it")
