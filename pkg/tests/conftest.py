import numpy as np
import pytest

from shtomo.forward_model import MaterialParams, assemble_dtn_matrix, build_kernel_spectrum

BASELINE = dict(mu=2.0, mu_s=0.1, ell2=0.001, rho=0.7)


def unchecked_params(mu, mu_s, ell2, rho):
    """MaterialParams without validation, for limit cases such as mu_s = 0."""
    p = object.__new__(MaterialParams)
    for k, v in dict(mu=mu, mu_s=mu_s, ell2=ell2, rho=rho).items():
        object.__setattr__(p, k, float(v))
    return p


@pytest.fixture
def baseline():
    return MaterialParams(**BASELINE)


@pytest.fixture(scope="session")
def baseline_matrix():
    return assemble_dtn_matrix(build_kernel_spectrum(MaterialParams(**BASELINE), 100), 128)


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[_CRITERIA_KEY] = {}


@pytest.fixture
def measured(request):
    """Record a measured quantity shown next to the criterion verdict."""

    def record(text):
        request.node.user_properties.append(("measured", text))

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.failed):
        return
    number, title = marker.args
    results = item.config.stash[_CRITERIA_KEY]
    prev = results.get(number, {"ok": True, "notes": []})
    ok = report.passed and prev["ok"]
    notes = prev["notes"] + [v for k, v in item.user_properties if k == "measured"]
    results[number] = {"ok": ok, "title": title, "notes": notes}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_CRITERIA_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        res = results[number]
        line = f"criterion {number:>2} {'PASS' if res['ok'] else 'FAIL'}  {res['title']}"
        if res["notes"]:
            line += "  [" + "; ".join(res["notes"]) + "]"
        terminalreporter.write_line(line)
