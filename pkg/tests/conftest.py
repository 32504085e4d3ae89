from __future__ import annotations

import pytest

from poolforge.synthkit import SynthSpec, generate

_criteria: dict[int, list[tuple[str, str]]] = {}


@pytest.fixture(scope="session")
def small_collection():
    return generate(SynthSpec(n_groups=5, runs_per_group=2, n_topics=12, corpus_size=2000, depth=30, seed=11))


@pytest.fixture(scope="session")
def mixed_collection():
    return generate(
        SynthSpec(n_groups=6, runs_per_group=3, manual_fraction=0.3, n_topics=10, corpus_size=2000, depth=40, seed=5)
    )


def pytest_runtest_logreport(report):
    # a criterion is decided by its call phase, or by a setup phase that skipped or errored
    if report.when != "call" and not (report.when == "setup" and not report.passed):
        return
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _criteria.setdefault(marker, []).append((report.nodeid.split("::")[-1], outcome))


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        results = _criteria[n]
        outcomes = {o for _, o in results}
        overall = "FAIL" if "FAIL" in outcomes else ("SKIP" if outcomes == {"SKIP"} else "PASS")
        names = ", ".join(name for name, _ in results)
        terminalreporter.write_line(f"criterion {n}: {overall}  ({names})")
