import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hklapse import (
    ConstantOne,
    DomainError,
    bound_curve,
    certify_wf,
    compare_regimes,
    constants_delayed,
    constants_undelayed,
)

E1 = math.exp(-1.0)

# frozen values of the closed-form constants, evaluated at 30 digits
C_UNIT = 0.632120558828557678  # 1 - e^-1
GAMMA_UNIT = 0.458675145387081891  # ln(1 / C_UNIT)
C_TILDE_UNIT = 0.864664716763387308  # 1 - e^-2
GAMMA_TILDE_UNIT = 0.0484711526229530190  # ln(1 / C_TILDE_UNIT) / 3
C_MIXED = 0.970569644706284614  # 1 - 0.08 e^-1
BOUND_AT_3 = 0.399576400893728049  # exp(-2 GAMMA_UNIT)


def test_unit_constants_undelayed():
    b = constants_undelayed(1.0, 1.0, 1.0, 1.0)
    assert b.C == pytest.approx(C_UNIT, rel=1e-15)
    assert b.gamma == pytest.approx(GAMMA_UNIT, rel=1e-14)
    assert b.regime == "undelayed" and b.C_tilde is None


def test_second_branch_wins():
    b = constants_undelayed(2.0, 0.5, 0.2, 0.4)
    assert b.C == pytest.approx(1.0 - 0.08 * E1, rel=1e-15)
    assert b.C == pytest.approx(C_MIXED, rel=1e-15)


@pytest.mark.parametrize("psi0, alpha_bar", [(1e-300, 1.0), (1.0, 1e-300)])
def test_degenerate_constant_rejected(psi0, alpha_bar):
    with pytest.raises(DomainError):
        constants_undelayed(1.0, 1.0, psi0, alpha_bar)


@pytest.mark.parametrize("args", [
    (0.0, 1.0, 0.5, 0.5),
    (1.0, 0.0, 0.5, 0.5),
    (1.0, 1.0, 2.0, 0.5),  # psi0 > K
    (1.0, 1.0, 0.5, 2.0),  # alpha_bar > T
    (1.0, 1.0, 0.0, 0.5),
])
def test_undelayed_domain(args):
    with pytest.raises(DomainError):
        constants_undelayed(*args)


def test_unit_constants_delayed_zero_tau():
    b = constants_delayed(1.0, 1.0, 0.0, 1.0, 1.0)
    assert b.C == pytest.approx(C_UNIT, rel=1e-15)
    assert b.C_tilde == pytest.approx(C_TILDE_UNIT, rel=1e-15)
    assert b.gamma == pytest.approx(GAMMA_TILDE_UNIT, rel=1e-12)


def test_delayed_example():
    b = constants_delayed(1.0, 2.0, 1.0, 0.2, 0.5)
    assert b.C == pytest.approx(1.0 - 0.1 * math.exp(-2.0), rel=1e-15)
    assert b.C == pytest.approx(0.986466471676338731, rel=1e-15)
    assert b.C_tilde == pytest.approx(1.0 - math.exp(-2.0) * 0.1 * math.exp(-2.0), rel=1e-15)
    assert b.C_tilde == pytest.approx(0.998168436111126582, rel=1e-15)


def test_delayed_rejects_tau_beyond_T():
    with pytest.raises(DomainError):
        constants_delayed(1.0, 1.0, 2.0, 0.5, 0.5)


def test_delayed_rejects_incompatible_certificate():
    cert = certify_wf(ConstantOne(), 1.0, 1.0, horizon=10.0)  # built without the delay
    with pytest.raises(DomainError):
        constants_delayed(1.0, 1.0, 0.5, 0.5, 0.5, cert=cert)


def test_delayed_accepts_merged_certificate():
    cert = certify_wf(ConstantOne(), 1.0, 1.0, horizon=20.0, tau=2.5)
    b = constants_delayed(1.0, cert.T, 2.5, 0.5, cert.alpha_bar, cert=cert)
    assert b.T == 3.0


@pytest.mark.parametrize("K, T, psi0, ab", [(1.0, 1.0, 1.0, 1.0), (2.0, 0.5, 0.2, 0.4),
                                            (0.7, 3.0, 0.1, 2.0)])
def test_zero_delay_gives_same_C(K, T, psi0, ab):
    assert constants_delayed(K, T, 0.0, psi0, ab).C == constants_undelayed(K, T, psi0, ab).C


@given(K=st.floats(0.05, 5.0), T=st.floats(0.05, 5.0), frac_psi=st.floats(0.01, 1.0),
       frac_ab=st.floats(0.01, 1.0), frac_tau=st.floats(0.0, 1.0))
def test_constants_in_range(K, T, frac_psi, frac_ab, frac_tau):
    psi0, ab, tau = frac_psi * K, frac_ab * T, frac_tau * T
    try:
        u = constants_undelayed(K, T, psi0, ab)
    except DomainError:
        return  # rate underflow at extreme parameters is reported, not hidden
    assert 0 < u.C < 1 and u.gamma > 0
    d = constants_delayed(K, T, tau, psi0, ab)
    assert 0 < d.C < 1 and 0 < d.C_tilde < 1 and d.gamma > 0
    assert d.C_tilde >= d.C


def test_monotone_in_psi0_and_alpha_bar():
    K, T = 1.0, 1.0
    grid = np.linspace(0.05, 1.0, 10)
    C = np.array([[constants_undelayed(K, T, p, a).C for a in grid] for p in grid])
    g = np.array([[constants_undelayed(K, T, p, a).gamma for a in grid] for p in grid])
    assert np.all(np.diff(C, axis=0) <= 0) and np.all(np.diff(C, axis=1) <= 0)
    assert np.all(np.diff(g, axis=0) >= 0) and np.all(np.diff(g, axis=1) >= 0)


# --- bound curves ------------------------------------------------------------


def test_bound_equals_scale_at_offset():
    u = constants_undelayed(1.0, 1.0, 1.0, 1.0, scale=2.5)
    assert bound_curve(u, 1.0) == 2.5
    d = constants_delayed(1.0, 2.0, 1.0, 0.2, 0.5, scale=3.0)
    assert bound_curve(d, 3 * 2.0 - 1.0) == 3.0


def test_bound_value_at_three():
    u = constants_undelayed(1.0, 1.0, 1.0, 1.0, scale=1.0)
    assert bound_curve(u, 3.0) == pytest.approx(BOUND_AT_3, rel=1e-14)
    assert bound_curve(u, 3.0) == pytest.approx(math.exp(-2 * GAMMA_UNIT), rel=1e-14)


def test_zero_scale_gives_zero_curve():
    d = constants_delayed(1.0, 1.0, 0.5, 0.5, 0.5, scale=0.0)
    np.testing.assert_array_equal(bound_curve(d, np.linspace(0, 10, 11)), 0.0)


def test_bound_strictly_decreasing():
    u = constants_undelayed(1.0, 1.0, 0.3, 0.6, scale=1.0)
    v = bound_curve(u, np.linspace(0, 50, 501))
    assert np.all(np.diff(v) < 0)


def test_bound_rejects_negative_time():
    with pytest.raises(DomainError):
        bound_curve(constants_undelayed(1.0, 1.0, 1.0, 1.0), -1.0)


def test_with_gamma_and_scale():
    u = constants_undelayed(1.0, 1.0, 1.0, 1.0)
    assert u.with_gamma(2.5).gamma == 2.5 and u.with_gamma(2.5).C == u.C
    assert u.with_scale(4.0).scale == 4.0


# --- regime comparison -------------------------------------------------------


def test_compare_regimes_unit():
    r = compare_regimes(1.0, 1.0, 1.0, 1.0)
    assert r["gamma_undelayed"] == pytest.approx(GAMMA_UNIT, rel=1e-14)
    assert r["gamma_delayed_same_C"] == pytest.approx(0.152891715129027297, rel=1e-14)
    assert r["gamma_undelayed"] == pytest.approx(3 * r["gamma_delayed_same_C"], rel=1e-15)
    assert r["gamma_delayed_general"] == pytest.approx(GAMMA_TILDE_UNIT, rel=1e-12)
    assert r["undelayed_dominates"]
    assert r["strictly_below_for_positive_t"]


@given(K=st.floats(0.1, 3.0), T=st.floats(0.1, 3.0), fp=st.floats(0.05, 1.0),
       fa=st.floats(0.05, 1.0))
def test_compare_regimes_dominance(K, T, fp, fa):
    try:
        r = compare_regimes(K, T, fp * K, fa * T)
    except DomainError:
        return
    assert r["undelayed_dominates"]
    assert r["strictly_below_for_positive_t"]
    table = r["table"]
    assert table[0]["undelayed"] == pytest.approx(table[0]["delayed"], rel=1e-12)


def test_compare_regimes_zero_diameter():
    r = compare_regimes(1.0, 1.0, 1.0, 1.0, d0=0.0)
    assert all(row["undelayed"] == 0 and row["delayed"] == 0 for row in r["table"])
