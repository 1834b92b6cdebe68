import pytest

from helpers import ACCEPTANCE_RESULTS, run_chain, small_config
from longform_bench import pipeline


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """A complete small pipeline run shared by report, pipeline and CLI tests."""
    root = tmp_path_factory.mktemp("small_run")
    cfg = pipeline.load_config(str(small_config(root)))
    run_chain(cfg)
    return cfg


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
