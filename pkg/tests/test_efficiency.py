import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from tokentrim import ValidationError
from tokentrim.efficiency import (CostProfile, cost_report, kv_cache_bytes, layer_flops,
                                  reduction_ratio, to_megabytes, two_stage_flops)
from tokentrim.oracle import exact_layer_flops, exact_reduction_ratio

LLAVA = dict(d=4096, m=11008, layers=32)


def test_unit_profile():
    assert layer_flops(CostProfile(1, 1, 1, 1)) == 8


def test_llava_flops_vs_exact():
    got = layer_flops(CostProfile(n=576, **LLAVA))
    want = exact_layer_flops(576, 4096, 11008, 32)
    assert want == 2_986_076_012_544
    assert got == pytest.approx(want, rel=5e-3)
    assert got == want  # every intermediate is an exactly representable integer


def test_superlinear_in_tokens():
    p = CostProfile(n=576, **LLAVA)
    assert layer_flops(p, 1152) > 2 * layer_flops(p)


@given(st.integers(2, 5000), st.integers(1, 512), st.integers(1, 2048), st.integers(1, 8))
def test_second_difference(n, d, m, layers):
    p = CostProfile(n, d, m, layers)
    second = layer_flops(p, n + 1) + layer_flops(p, n - 1) - 2 * layer_flops(p, n)
    assert second == 2 * layers * 2 * d
    assert layer_flops(CostProfile(n, d, 2 * m, layers)) - layer_flops(p) == 2 * layers * n * d * m


def test_reduction_examples():
    assert reduction_ratio(CostProfile(n=576, **LLAVA)) == 0.0
    vals = [reduction_ratio(CostProfile(n=576, gamma=g, **LLAVA)) for g in (0.5, 0.25, 0.1)]
    assert vals[0] < vals[1] < vals[2] < 1


def test_reduction_llava_next():
    f = reduction_ratio(CostProfile(n=2880, gamma=320 / 2880, **LLAVA))
    assert f == pytest.approx(float(exact_reduction_ratio(2880, 4096, 11008, 320)), abs=1e-9)
    assert f == pytest.approx(0.899, abs=2e-3)


@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_reduction_monotone(g1, g2):
    lo, hi = sorted((g1, g2))
    assume(hi - lo > 1e-6)
    f = lambda g: reduction_ratio(CostProfile(n=1000, d=256, m=1024, layers=1, gamma=g))  # noqa
    assert f(lo) > f(hi)


@pytest.mark.parametrize("gamma", [0.0, -0.1, 1.5])
def test_reduction_rejects_gamma(gamma):
    with pytest.raises(ValidationError):
        CostProfile(n=10, d=4, m=8, layers=1, gamma=gamma)


def test_kv_examples():
    assert kv_cache_bytes(CostProfile(1, 1, 1, 1)) == 4
    full = kv_cache_bytes(CostProfile(n=576, **LLAVA))
    assert full == 301_989_888
    assert to_megabytes(full) == pytest.approx(302.0, abs=0.05)
    assert abs(to_megabytes(full) - 303.6) / 303.6 < 0.05
    small = kv_cache_bytes(CostProfile(n=64, **LLAVA))
    assert small == 33_554_432
    assert to_megabytes(small, binary=True) == 32.0


@given(st.integers(1, 4096), st.integers(1, 4096), st.integers(1, 80))
def test_kv_linear(n, d, layers):
    base = kv_cache_bytes(CostProfile(n, d, 1, layers))
    assert kv_cache_bytes(CostProfile(2 * n, d, 1, layers)) == 2 * base
    assert kv_cache_bytes(CostProfile(n, 3 * d, 1, layers)) == 3 * base
    assert kv_cache_bytes(CostProfile(n, d, 1, 2 * layers)) == 2 * base


def test_two_stage():
    p = CostProfile(n=576, **LLAVA)
    per = lambda n: layer_flops(CostProfile(n, 4096, 11008, 1))  # noqa
    assert two_stage_flops(p, 288, 64, 0, 2) == 2 * per(288) + 30 * per(64)
    assert two_stage_flops(p, 576, 576, 5, 9) == layer_flops(p)
    with pytest.raises(ValidationError):
        two_stage_flops(p, 288, 64, 3, 2)


def test_report_keys():
    rep = cost_report(CostProfile(n=2880, gamma=320 / 2880, **LLAVA))
    assert {"flops_total", "flops_baseline", "reduction_ratio", "kv_bytes", "kv_mb"} <= set(rep)
    assert rep["kv_bytes"] == kv_cache_bytes(CostProfile(n=320, **LLAVA))
    assert rep["inputs"]["n"] == 2880
