import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polydg.material import (MaterialModel, PRESETS, material_preset,
                             stiffness_norm)


def voigt_stiffness_eigenvalues(lam, mu):
    """Brute-force spectrum of C on symmetric 2x2 matrices.

    Orthonormal basis {e11, e22, sqrt(2) e12} of symmetric matrices gives
    the 3x3 representation of C whose eigenvalues bound |C^{1/2}|_2^2.
    """
    C = np.array([[2 * mu + lam, lam, 0.0],
                  [lam, 2 * mu + lam, 0.0],
                  [0.0, 0.0, 2 * mu]])
    return np.linalg.eigvalsh(C)


class TestDerived:
    def test_densities(self):
        m = material_preset("test1")
        assert m.rho == pytest.approx(1.0)      # 0.5*1 + 0.5*1
        assert m.rho_w == pytest.approx(2.0)    # (1/0.5)*1
        assert m.rho_w >= m.rho_f

    def test_density_block_pd_all_presets(self):
        for name in PRESETS:
            assert material_preset(name).density_block_pd(), name

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(1.0, 5.0),
           st.floats(0.1, 10.0), st.floats(0.1, 10.0))
    def test_density_block_pd_generic(self, phi, a, rho_f, rho_s):
        m = MaterialModel(phi=phi, a=a, rho_f=rho_f, rho_s=rho_s,
                          beta=min(1.0, phi + 0.01))
        assert m.rho_w >= m.rho_f * (1 - 1e-12)
        assert m.density_block_pd()


class TestValidation:
    @pytest.mark.parametrize("kwargs", [
        {"phi": 0.0}, {"phi": 1.0}, {"a": 0.5}, {"eta": 0.0},
        {"kappa": -1.0}, {"mu": 0.0}, {"lam": -0.1}, {"m": 0.0},
        {"beta": 0.4},            # beta <= phi
        {"beta": 1.5}, {"gamma": -1.0}, {"delta": 0.0}, {"alpha": 0.0},
    ])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ValueError):
            MaterialModel(**kwargs)

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            material_preset("test9")


class TestConstitutive:
    def test_stress_identity_strain(self):
        m = material_preset("test1")      # lam = mu = 1
        sig = m.elastic_stress(np.eye(2))
        assert np.allclose(sig, 4.0 * np.eye(2))

    def test_stress_zero(self):
        m = material_preset("test1")
        assert np.allclose(m.elastic_stress(np.zeros((2, 2))), 0.0)

    def test_stress_pure_shear_trace_free(self):
        m = MaterialModel(mu=1.0, lam=7.3)
        eps = np.array([[0.0, 0.5], [0.5, 0.0]])
        assert np.allclose(m.elastic_stress(eps), [[0, 1], [1, 0]])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_stress_linear_and_selfadjoint(self, seed):
        rng = np.random.default_rng(seed)
        m = MaterialModel(mu=rng.uniform(0.1, 3), lam=rng.uniform(0, 3))
        a = rng.standard_normal((2, 2))
        b = rng.standard_normal((2, 2))
        ea = 0.5 * (a + a.T)
        eb = 0.5 * (b + b.T)
        s1 = np.tensordot(m.elastic_stress(ea), eb)
        s2 = np.tensordot(m.elastic_stress(eb), ea)
        assert s1 == pytest.approx(s2, rel=1e-12)
        assert np.allclose(m.elastic_stress(2 * ea + eb),
                           2 * m.elastic_stress(ea) + m.elastic_stress(eb))

    def test_pore_pressure(self):
        m = MaterialModel(m=1.0, beta=1.0)
        assert m.pore_pressure(1.0, -1.0) == pytest.approx(0.0)
        assert m.pore_pressure(0.0, 0.0) == pytest.approx(0.0)
        m2 = MaterialModel(m=1e4, beta=1.0)
        assert m2.pore_pressure(1e-4, 0.0) == pytest.approx(-1.0)


class TestStiffnessNorm:
    def test_unit(self):
        assert stiffness_norm(1.0, 1.0) == pytest.approx(4.0)

    def test_zero_lambda(self):
        assert stiffness_norm(0.0, 2.5) == pytest.approx(5.0)

    def test_large_lambda(self):
        assert stiffness_norm(1e6, 1.0) == pytest.approx(2e6 + 2.0)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.0, 1e6), st.floats(1e-3, 1e3))
    def test_matches_voigt_spectrum(self, lam, mu):
        ev = voigt_stiffness_eigenvalues(lam, mu)
        assert stiffness_norm(lam, mu) == pytest.approx(ev[-1], rel=1e-12)
        want = np.sort([2 * mu, 2 * mu, 2 * mu + 2 * lam])
        assert np.allclose(np.sort(ev), want, rtol=1e-9)


def test_preset_parameter_values():
    t1 = material_preset("test1")
    assert (t1.lam, t1.mu, t1.alpha, t1.delta, t1.gamma) == (1, 1, 1, 1, 0)
    assert (t1.rho_f, t1.rho_s, t1.a, t1.phi) == (1, 1, 1, 0.5)
    assert t1.eta_over_kappa == pytest.approx(1.0)
    assert (t1.beta, t1.m, t1.mu_f) == (1, 1, 0.5)
    t2 = material_preset("test2")
    assert (t2.lam, t2.mu, t2.alpha) == (1, 0.5, 2)
    t3b = material_preset("test3B")
    assert t3b.lam == pytest.approx(1e6)
    assert t3b.eta_over_kappa == pytest.approx(1e4)
    assert t3b.m == pytest.approx(1e4)
    assert (t3b.delta, t3b.gamma) == (100.0, 1.0)
    t3a = material_preset("test3A")
    assert (t3a.lam, t3a.gamma, t3a.delta) == (1.0, 1.0, 1.0)
