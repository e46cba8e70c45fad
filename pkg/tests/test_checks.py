import pytest

from ringsim import checks


@pytest.fixture(scope="module")
def quick_results():
    return checks.run_suite("quick")


class TestInvariantSuite:
    def test_all_pass(self, quick_results):
        failed = [r.line() for r in quick_results if not r.passed]
        assert not failed, failed

    def test_names_unique(self, quick_results):
        names = [r.name for r in quick_results]
        assert len(names) == len(set(names))

    def test_line_format(self, quick_results):
        assert all(r.line().startswith("[PASS] ") for r in quick_results)

    def test_fault_is_detected(self):
        res = checks.check_staleness(range(1), max_k=300, corrupt_eta_factor=1.5)
        assert not res.passed

    def test_staleness_clean(self):
        assert checks.check_staleness(range(1), max_k=300).passed
