import numpy as np
import pytest
from hypothesis import settings

from tensorfield.lattice_field import ModeLattice, random_field

settings.register_profile("repo", max_examples=40, deadline=None)
settings.load_profile("repo")


def rand(d, N, seed, batch=(), decay=0.0):
    return random_field(ModeLattice(d, N), np.random.default_rng(seed), batch, decay)


def zscore(samples, exact):
    """Per-component |mean - exact| / SE for real arrays of draws on axis 0."""
    samples = np.asarray(samples)
    se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    diff = np.abs(samples.mean(axis=0) - exact)
    return np.where(se > 0, diff / np.where(se > 0, se, 1), np.where(diff > 1e-10, np.inf, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one ``criterion k: PASS/FAIL`` line, shown in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _report(k, ok, detail=""):
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        print(line)
        lines.append(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
