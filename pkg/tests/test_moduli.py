import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dini_reglab.errors import DomainError, PreconditionError
from dini_reglab.moduli import (DerivedModuli, ModulusSpec, check_doubling, dini_integral, empirical_modulus,
                                eval_modulus, eval_omega, eval_sigma, regularize)

CUT = 2.0 ** -200


def test_eval_examples():
    assert eval_modulus(ModulusSpec.power(0.5), 0.25) == pytest.approx(0.5, abs=1e-15)
    assert eval_modulus(ModulusSpec.log_inverse(1.0), math.exp(-9)) == pytest.approx(0.1, rel=1e-14)
    for spec in (ModulusSpec.power(0.5), ModulusSpec.log_inverse(), ModulusSpec.log_power(2.0),
                 ModulusSpec.tabulated([0.5, 1.0], [0.2, 0.3])):
        assert eval_modulus(spec, 0.0) == 0.0


def test_eval_out_of_domain():
    with pytest.raises(DomainError):
        eval_modulus(ModulusSpec.power(0.5), 1.5)
    with pytest.raises(DomainError):
        eval_modulus(ModulusSpec.power(0.5), -0.1)


def test_tabulated_interpolates_and_rejects_decreasing():
    spec = ModulusSpec.tabulated([0.25, 0.5, 1.0], [0.1, 0.3, 0.4])
    assert eval_modulus(spec, 0.375) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        ModulusSpec.tabulated([0.25, 0.5], [0.3, 0.1])


def test_json_roundtrip():
    spec = ModulusSpec.log_power(1.5)
    assert ModulusSpec.from_json(spec.to_json()) == spec


def test_dini_power_total():
    res = dini_integral(ModulusSpec.power(0.5), CUT)
    assert res.verdict == "convergent"
    assert res.total == pytest.approx(2 * (1 - CUT ** 0.5), rel=1e-8)


def test_dini_log_inverse_divergent_with_expected_increments():
    res = dini_integral(ModulusSpec.log_inverse(1.0), CUT)
    assert res.verdict == "divergent"
    # exact increment over [2^-(k+1), 2^-k]: log((1 + (k+1) log 2) / (1 + k log 2))
    k = np.arange(len(res.partial_sums))
    exact = np.log1p(math.log(2) / (1 + k * math.log(2)))
    assert np.allclose(res.partial_sums, exact, rtol=1e-10)


def test_dini_log_power_two_total():
    res = dini_integral(ModulusSpec.log_power(2.0), CUT)
    assert res.verdict == "convergent"
    # antiderivative (log(e/t))^-1 between CUT and 1
    assert res.total == pytest.approx(1 - 1 / (1 + math.log(1 / CUT)), rel=1e-8)


def test_dini_rejects_bad_cut():
    with pytest.raises(PreconditionError):
        dini_integral(ModulusSpec.power(0.5), 1.5)


def test_doubling_examples():
    assert check_doubling(ModulusSpec.power(0.5), 1000)
    assert not check_doubling(ModulusSpec.power(2.0), 1000)
    assert check_doubling(ModulusSpec.log_inverse(1.0), 1000)
    t = np.geomspace(1e-12, 0.5, 5000)  # sampling oracle
    assert np.all(1 / (1 + np.abs(np.log(2 * t))) <= 2 / (1 + np.abs(np.log(t))))


def test_regularize_examples():
    t = np.geomspace(1e-6, 1.0, 1000)
    assert np.allclose(regularize(ModulusSpec.power(2.0))(t), t, rtol=1e-12)
    assert np.allclose(regularize(ModulusSpec.power(1.0))(t), t, rtol=1e-12)
    # t^-1/2 is already decreasing, so sqrt is its own regularization
    assert np.allclose(regularize(ModulusSpec.power(0.5))(t), np.sqrt(t), rtol=1e-12)
    # t^2 + t^0.3 / 10: the ratio is decreasing, so again unchanged
    spec = ModulusSpec.tabulated(t, t ** 2 + t ** 0.3 / 10)
    assert np.all(regularize(spec)(t) >= eval_modulus(spec, t) * (1 - 1e-12))


def test_regularize_rejects_divergent():
    with pytest.raises(PreconditionError):
        regularize(ModulusSpec.log_inverse(1.0))


def sigma_linear(t):
    """Closed form of sigma for theta(t) = t."""
    return (t * t / 2 + t) + t * ((1 - t) + math.log(1 / t)) + t * t + t


def test_omega_sigma_linear():
    spec = ModulusSpec.power(1.0)
    assert eval_omega(spec, 0.5) == pytest.approx(0.75)
    assert eval_sigma(spec, 1.0) == pytest.approx(sigma_linear(1.0), rel=1e-10)
    for t in (1e-4, 0.01, 0.3):
        assert eval_sigma(spec, t) == pytest.approx(sigma_linear(t), rel=1e-10)


def test_sigma_monotone_pairs(rng):
    spec = ModulusSpec.power(0.5)
    pairs = np.sort(rng.uniform(1e-6, 1.0, size=(100, 2)), axis=1)
    s = eval_sigma(spec, pairs.ravel()).reshape(pairs.shape)
    assert np.all(s[:, 0] <= s[:, 1])


def test_sigma_needs_dini():
    with pytest.raises(PreconditionError):
        eval_sigma(ModulusSpec.log_inverse(1.0), 0.5)


def test_derived_bundle():
    d = DerivedModuli(ModulusSpec.power(1.0))
    assert d.omega(0.5) == pytest.approx(0.75)
    assert d.theta_tilde(0.5) == pytest.approx(0.5)
    assert d.omega_dini(1.0) == pytest.approx(1.5, rel=1e-10)


def test_empirical_modulus_of_w21_alpha_is_not_dini():
    from dini_reglab.counterexamples import W21Params

    spec = empirical_modulus(W21Params(gamma=2.0, logR=10.0).alpha_profile())
    assert dini_integral(spec, lower_cut=spec.smallest_sample).verdict == "divergent"


betas = st.floats(0.1, 3.0)


@given(betas, st.floats(0.1, 5.0))
def test_regularized_dominates_and_ratio_nonincreasing(beta, scale):
    spec = ModulusSpec.power(beta, scale)
    t = np.geomspace(1e-9, 1.0, 1000)
    tt = regularize(spec)(t)
    assert np.all(tt >= eval_modulus(spec, t) * (1 - 1e-12))
    r = tt / t
    assert np.all(np.diff(r) <= 1e-12 * r[:-1])


# gamma close to 1 cannot be resolved by a finite dyadic test
@given(st.floats(1.5, 4.0))
def test_log_power_regularization(gamma):
    spec = ModulusSpec.log_power(gamma)
    t = np.geomspace(1e-9, 1.0, 1000)
    tt = regularize(spec)(t)
    assert np.all(tt >= eval_modulus(spec, t) * (1 - 1e-12))


@given(st.floats(0.1, 1.0))
def test_sigma_dominates_omega_and_is_monotone(beta):
    spec = ModulusSpec.power(beta)
    t = np.geomspace(1e-5, 1.0, 12)
    s = eval_sigma(spec, t)
    assert np.all(s >= eval_omega(spec, t))
    assert np.all(np.diff(s) >= 0)


@given(st.sampled_from([ModulusSpec.power(0.5), ModulusSpec.power(0.9), ModulusSpec.log_inverse(1.0),
                        ModulusSpec.log_inverse(3.0)]))
def test_omega_quadruples_at_most_sixteen_fold(spec):
    assert check_doubling(spec, 500)
    t = np.geomspace(1e-10, 0.25, 1000)
    assert np.all(eval_omega(spec, 4 * t) <= 16 * eval_omega(spec, t) * (1 + 1e-12))


@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=12))
def test_tabulated_monotone_on_samples(vals):
    th = np.cumsum(np.abs(vals)) + 0.0
    t = np.linspace(0.05, 1.0, len(th))
    spec = ModulusSpec.tabulated(t, th)
    s = np.linspace(0, 1, 1000)
    assert np.all(np.diff(eval_modulus(spec, s)) >= -1e-15)
