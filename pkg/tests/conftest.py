import pytest

_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion identifier")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    cid, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        metrics = {k: v for k, v in item.user_properties}
        _RESULTS[cid] = (title, rep.outcome, metrics)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: int(c[1:])):
        title, outcome, metrics = _RESULTS[cid]
        status = "PASS" if outcome == "passed" else "FAIL"
        detail = ", ".join(f"{k}={_short(v)}" for k, v in metrics.items())
        tr.write_line(f"{cid:<4} {status}  {title}" + (f"  [{detail}]" if detail else ""))


def _short(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "(" + ", ".join(_short(x) for x in v) + ")"
    return str(v)
