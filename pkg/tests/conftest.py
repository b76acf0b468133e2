import numpy as np

ACCEPTANCE_LINES: list[str] = []


def record_verdict(line: str):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def max_rel_err(analytic, numeric, floor: float = 1e-6) -> float:
    """Worst entrywise relative error, with an absolute floor for near-zeros.

    The floor covers entries at or below central-difference noise
    (~1e-11 absolute for double precision at step 1e-5), where a relative
    comparison would only measure the oracle's own truncation error.
    """
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    assert a.shape == b.shape
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
