import pytest


@pytest.fixture(scope="session")
def emit(request):
    """Write a line that survives pytest's output capture.

    The acceptance suite reports one pass/fail line per criterion; those
    lines must reach the terminal (and any tee'd log) even while stdout
    is captured, so they go through the terminal reporter when present.
    """
    reporter = request.config.pluginmanager.getplugin("terminalreporter")

    def _emit(line: str) -> None:
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)

    return _emit
