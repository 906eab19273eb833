import math

import numpy as np
import pytest

from qvnet.qubo import build_gap
from qvnet.vnet import Scenario, VNetConfig


def make_scenario(bs, avs, config=None, fading=None, prior=None, **overrides):
    """Hand-placed scenario: ``bs`` is a list of (x, y, type), ``avs`` a list of (x, y)."""
    n_rbs = sum(t == "RF" for _, _, t in bs)
    base = config or VNetConfig()
    cfg = base.replace(n_rbs=n_rbs, n_tbs=len(bs) - n_rbs, n_avs=len(avs), **overrides)
    if fading is None:
        fading = np.ones((len(avs), len(bs)))
    return Scenario(
        bs_positions=[(x, y) for x, y, _ in bs],
        bs_types=tuple(t for _, _, t in bs),
        av_positions=avs,
        fading_gains=fading,
        prior_association=prior,
        config=cfg,
    )


def x_at_range(r, config=None):
    """Ground distance that gives 3D link distance ``r`` for the default antenna heights."""
    h = (config or VNetConfig()).height_diff
    return math.sqrt(r * r - h * h)


def random_gap(rng, n_avs, n_bs, cap=None, sparsity=0.0):
    wr = rng.uniform(0.0, 10.0, size=(n_avs, n_bs))
    if sparsity:
        wr[rng.random(wr.shape) < sparsity] = 0.0
    if cap is None:
        cap = rng.integers(1, n_avs + 1, size=n_bs)
        while cap.sum() < n_avs:
            cap[rng.integers(n_bs)] += 1
    return build_gap(wr, cap)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def report(number: int, ok: bool, detail: str) -> bool:
        lines[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return report


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
