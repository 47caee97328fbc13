import numpy as np
import pytest

from adfcontact import kernels

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


@pytest.fixture
def detail(request):
    """Mutable dict; its ``text`` entry is shown next to the criterion verdict."""
    info = {"text": ""}
    request.node._criterion_detail = info
    return info


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    info = getattr(item, "_criterion_detail", {"text": ""})
    if hasattr(rep, "wasxfail"):
        verdict = "XFAIL"
    else:
        verdict = "PASS" if rep.passed else "FAIL"
    _CRITERIA[str(number)] = (title, verdict, info["text"])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA, key=lambda k: (int(k.rstrip("abc")), k)):
        title, verdict, text = _CRITERIA[number]
        line = f"criterion {number:>3} {verdict:<5}  {title}"
        if text:
            line += f"  [{text}]"
        terminalreporter.write_line(line)


def random_simplex(rng, d, scale=1.0, max_cond=1e3):
    """Positively oriented random simplex with a bounded Jacobian condition number."""
    while True:
        x = scale * rng.uniform(-1.0, 1.0, (d + 1, d))
        J = (x[1:] - x[0]).T
        det = np.linalg.det(J)
        if abs(det) < 1e-3 * scale**d or np.linalg.cond(J) > max_cond:
            continue
        if det < 0:
            x[[1, 2]] = x[[2, 1]]
        return x
