import math

import numpy as np
import pytest

from implicit_bias.bounds import BoundInputs, margin_bound


def test_worked_example():
    v = margin_bound(BoundInputs(gamma=0.5, C=2.0, n=10_000, delta=0.05))
    assert v.complexity == pytest.approx(0.08, abs=1e-15)
    assert v.loglog == pytest.approx(0.011774100225154747, abs=1e-12)
    assert v.confidence == pytest.approx(0.012238734153404085, abs=1e-12)
    assert v.raw == pytest.approx(0.1040, abs=5e-5)
    assert v.value == v.raw


def test_clamped_but_raw_reported():
    v = margin_bound(BoundInputs(gamma=0.01, C=2.0, n=10, delta=0.05))
    assert v.raw > 1 and v.value == 1.0
    d = v.to_dict()
    assert d["raw"] == v.raw and d["value"] == 1.0


@pytest.mark.parametrize("kw", [
    dict(gamma=0.0, C=1.0, n=10, delta=0.1),
    dict(gamma=2.0, C=1.0, n=10, delta=0.1),   # log2(4C/gamma) = 1
    dict(gamma=3.0, C=1.0, n=10, delta=0.1),
    dict(gamma=0.1, C=1.0, n=0, delta=0.1),
    dict(gamma=0.1, C=1.0, n=10, delta=1.0),
    dict(gamma=0.1, C=1.0, n=10, delta=0.1, rad=-1.0),
])
def test_invalid_inputs(kw):
    with pytest.raises(ValueError):
        BoundInputs(**kw)


def test_doubling_gamma_halves_complexity():
    a = margin_bound(BoundInputs(gamma=0.2, C=2.0, n=500, delta=0.1, rad=0.3))
    b = margin_bound(BoundInputs(gamma=0.4, C=2.0, n=500, delta=0.1, rad=0.3))
    assert b.complexity == pytest.approx(a.complexity / 2, rel=1e-15)


def test_monotonicity_grids():
    gammas = np.linspace(0.01, 1.9, 60)
    vals = [margin_bound(BoundInputs(g, 1.0, 1000, 0.05)).raw for g in gammas]
    assert np.all(np.diff(vals) <= 0)
    ns = np.unique(np.logspace(0, 7, 60).astype(int))
    vals = [margin_bound(BoundInputs(0.3, 1.0, int(n), 0.05)).raw for n in ns]
    assert np.all(np.diff(vals) <= 0)
    Cs = np.linspace(0.5, 50, 60)
    vals = [margin_bound(BoundInputs(0.3, C, 1000, 0.05)).raw for C in Cs]
    assert np.all(np.diff(vals) >= 0)


def test_rate_in_n():
    for n in (10 ** 4, 10 ** 6, 10 ** 8):
        r = margin_bound(BoundInputs(0.3, 2.0, 4 * n, 0.05)).raw / margin_bound(BoundInputs(0.3, 2.0, n, 0.05)).raw
        assert 0.4 <= r <= 0.6


def test_terms_vanish():
    v = margin_bound(BoundInputs(0.3, 2.0, 10 ** 12, 0.05))
    assert v.raw < 1e-4
    assert math.isfinite(v.raw)
