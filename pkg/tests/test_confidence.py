import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kucbrl.confidence import (
    ConfidenceParams,
    beta,
    beta_full,
    beta_simplified,
    choose_M,
    default_params,
)
from kucbrl.exceptions import InvalidInputError
from kucbrl.kernels import EigenProfile, tail_sums


def params(**kw):
    base = dict(C_f=1.0, C_v=1.0, delta=0.1, rho=1.0)
    base.update(kw)
    return ConfidenceParams(**base)


def test_simplified_hand_value():
    p = params(C_f=2.0, C_v=3.0, rho=4.0)
    assert beta_simplified(p, 10, 1.5) == pytest.approx(2.0 + 1.5 * math.sqrt(math.log(100) + 1.5))


def test_full_hand_value():
    prof = EigenProfile.explicit([0.6, 0.3, 0.1], psi_max=2.0)
    p = params(C_f=1.0, C_v=2.0, rho=0.25, state_profile=prof)
    scale = 2.0 * 2.0 / 0.5
    expect = 1.0 + scale * math.sqrt(0.9) * math.sqrt(math.log(2 / 0.1) + 3.0) + 2 * scale * math.sqrt(50 * 0.1)
    assert beta_full(p, 50, 3.0, 2) == pytest.approx(expect)


def test_full_reduces_to_norm_bound_without_value_norm():
    assert beta_full(params(C_v=0.0), 100, 5.0, 3) == 1.0


def test_choose_M_rules():
    assert choose_M(EigenProfile.polynomial(p=3.0), 100) == 10
    assert choose_M(EigenProfile.exponential(), 100) == math.ceil(math.log(100))
    assert choose_M(EigenProfile.exponential(), 1) == 1
    prof = EigenProfile.explicit([1.0, 0.1, 0.001])
    assert choose_M(prof, 4) == 1  # 0.101 * 4 <= 1.0
    assert choose_M(prof, 20) == 2  # 0.101 * 20 > 1.0 but 0.001 * 20 <= 1.1
    assert choose_M(EigenProfile.explicit([1.0, 0.0]), 10**9) == 1


def test_choose_M_capped_for_slow_decay():
    M = choose_M(EigenProfile.polynomial(p=1.001), 10**6)
    assert 1 <= M <= 10**12
    head, tail = tail_sums(EigenProfile.polynomial(p=1.001), M)
    assert math.isfinite(head) and math.isfinite(tail)


@given(n=st.integers(1, 10**6), ld1=st.floats(0, 100), extra=st.floats(0, 100),
       kind=st.sampled_from(["polynomial", "exponential"]))
def test_full_width_monotone_in_logdet(n, ld1, extra, kind):
    prof = EigenProfile.polynomial(p=2.5) if kind == "polynomial" else EigenProfile.exponential()
    p = params(state_profile=prof)
    M = choose_M(prof, n)
    assert beta_full(p, n, ld1 + extra, M) >= beta_full(p, n, ld1, M)


@given(d1=st.floats(1e-6, 0.99), d2=st.floats(1e-6, 0.99), n=st.integers(1, 10**5))
def test_widths_decrease_in_delta(d1, d2, n):
    lo, hi = sorted((d1, d2))
    for mode in ("full", "simplified"):
        assert beta(params(delta=lo, mode=mode), n, 2.0) >= beta(params(delta=hi, mode=mode), n, 2.0)


def test_large_logdet_no_overflow():
    assert math.isfinite(beta_full(params(), 10**6, 1e6, 20))


def test_default_params_scale_with_window():
    p = default_params(7, 0.5, 0.1, EigenProfile.exponential())
    assert (p.C_f, p.C_v, p.rho) == (7.0, 7.0, 0.5)
    assert default_params(7, 0.5, 0.1, EigenProfile.exponential(), C_f=1.0).C_f == 1.0


def test_validation():
    with pytest.raises(InvalidInputError):
        params(delta=1.0)
    with pytest.raises(InvalidInputError):
        params(mode="other")
    with pytest.raises(InvalidInputError):
        beta_full(params(), 1, -1.0, 1)
    with pytest.raises(InvalidInputError):
        choose_M(EigenProfile.exponential(), 0)
