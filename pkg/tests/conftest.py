_STATUS = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP", "xfailed": "FAIL (optional)"}


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion with the measured value."""
    rows = []
    for outcome, status in _STATUS.items():
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid or rep.when not in ("setup", "call"):
                continue
            props = dict(rep.user_properties)
            rows.append((props.get("criterion", nodeid.split("::")[-1]), status, props.get("measured", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, measured in sorted(rows):
        terminalreporter.write_line(f"{status}  {name}  {measured}".rstrip())
