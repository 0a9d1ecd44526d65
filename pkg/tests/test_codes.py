import math

import numpy as np
import pytest

from aqec_sim.codes import (
    LOGICAL_LABELS,
    CodeSpec,
    binomial_lowest,
    code_by_name,
    error_operator,
    fock_superposition,
    generalized_binomial,
    kl_check,
    logical_state,
    no_jump_map,
    sqrt17,
)


def test_error_operator_labels():
    a = error_operator("a", 5)
    assert np.allclose(error_operator("a^2", 5), a @ a)
    assert np.allclose(error_operator("adag", 5), a.conj().T)
    assert np.allclose(error_operator("n", 5), np.diag(np.arange(5)))
    with pytest.raises(ValueError):
        error_operator("b", 5)


def test_binomial_codewords():
    z, o = binomial_lowest().codewords(6)
    assert np.allclose(z, [1 / math.sqrt(2), 0, 0, 0, 1 / math.sqrt(2), 0])
    assert np.allclose(o, [0, 0, 1, 0, 0, 0])


def test_mean_photon_numbers():
    assert binomial_lowest().average_photon_number == pytest.approx(2.0)
    # both sqrt17 codewords share <n> = (sqrt17 - 1)/2
    assert sqrt17().average_photon_number == pytest.approx((math.sqrt(17) - 1) / 2)


@pytest.mark.parametrize("factory", [binomial_lowest, sqrt17])
def test_kl_passes_single_loss(factory):
    rep = kl_check(factory(), ["I", "a"])
    assert rep.ok and rep.worst_residual < 1e-9


def test_kl_fails_fock14():
    assert not kl_check(fock_superposition(1, 4), ["I", "a"]).ok


def test_kl_fails_binomial_on_double_loss():
    assert not kl_check(binomial_lowest(), ["I", "a", "a^2"]).ok


def test_generalized_binomial_two_loss_codeword():
    code = generalized_binomial(2, 0, 0)
    z, o = code.codewords(10)
    expect = np.zeros(10)
    expect[0], expect[6] = 0.5, math.sqrt(3) / 2
    assert np.allclose(z, expect, rtol=0, atol=1e-15)
    assert kl_check(code, ["I", "a", "a^2"]).ok


def test_generalized_binomial_reduces_to_lowest():
    g = generalized_binomial(1, 0, 0)
    b = binomial_lowest()
    assert np.allclose(g.codewords(6)[0], b.codewords(6)[0])
    assert np.allclose(g.codewords(6)[1], b.codewords(6)[1])


def test_generalized_binomial_dimension_cap():
    with pytest.raises(ValueError, match="cap"):
        generalized_binomial(6, 6, 3)


@pytest.mark.parametrize("kappa,t_wait", [(1 / 1400, 150.0), (1 / 1400, 30.0), (1 / 500, 100.0),
                                          (1 / 2000, 400.0), (1 / 1000, 1.0)])
def test_no_jump_amplitude_ratio(kappa, t_wait):
    nj = no_jump_map(binomial_lowest(), kappa, t_wait)
    assert math.tan(nj.theta) == pytest.approx(math.exp(-2 * kappa * t_wait), rel=1e-6)
    # the |2> codeword is an eigenvector of n, so only a global factor
    assert np.allclose(nj.one[:5], [0, 0, 1, 0, 0])


def test_no_jump_warns_out_of_regime():
    with pytest.warns(UserWarning):
        no_jump_map(binomial_lowest(), 0.01, 100.0)


def test_json_round_trip():
    code = sqrt17()
    back = CodeSpec.from_json(code.to_json())
    assert np.allclose(back.logical_zero, code.logical_zero)
    assert np.allclose(back.error_states(6)[1], code.error_states(6)[1])


def test_bad_codewords_rejected():
    z = np.array([1, 0, 0], complex)
    with pytest.raises(ValueError, match="orthogonal"):
        CodeSpec("bad", z, z)


def test_logical_states_are_unbiased():
    code = code_by_name("binomial")
    z, o = code.codewords(6)
    for label in LOGICAL_LABELS:
        v = logical_state(code, label, 6)
        assert np.linalg.norm(v) == pytest.approx(1.0)
    plus = logical_state(code, "+X", 6)
    assert abs(np.vdot(z, plus)) ** 2 == pytest.approx(0.5)
    with pytest.raises(ValueError):
        logical_state(code, "+W")


def test_unknown_code_name():
    with pytest.raises(KeyError):
        code_by_name("steane")
