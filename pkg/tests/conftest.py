import pytest

from gatewave.cggi import PARAM_110, ParamSet, keygen

# Small parameter set for fast unit tests.  The noise is far below what
# the gadget error budget tolerates, so gate outputs are deterministic.
MINI = ParamSet(
    n=16,
    N=64,
    lwe_noise_std=2.0 ** -20,
    rlwe_noise_std=1e-9,
    Bg_bits=9,
    l=2,
    ks_base_bits=2,
    ks_levels=8,
)


@pytest.fixture(scope="session")
def mini_params():
    return MINI


@pytest.fixture(scope="session")
def mini_keys():
    return keygen(MINI, seed=2024)


@pytest.fixture(scope="session")
def real_keys():
    return keygen(PARAM_110, seed=7)


_ACCEPTANCE: list[tuple[int, str, str, str]] = []


class AcceptanceLog:
    """Collects one line per acceptance criterion for the summary."""

    def record(self, num: int, label: str, status: str, detail: str = ""):
        _ACCEPTANCE.append((num, label, status, detail))


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, status, detail in sorted(_ACCEPTANCE):
        line = f"ACCEPTANCE {num} [{status}] {label}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
