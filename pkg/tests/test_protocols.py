import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmwave_cs.protocols import (
    Family,
    Protocol,
    SensingParams,
    announcement_radii,
    is_deaf_interferer,
    is_hidden_interferer,
    sensing_distance_law,
    sensing_gain_distribution,
)
from mmwave_cs.radio import (
    AntennaParams,
    LinkType,
    NoiseParams,
    PathLossParams,
    array_gains,
    interferer_gain_distribution,
    noise_floor,
    noise_floor_dbm,
)

A = AntennaParams()
PL = PathLossParams()
S = SensingParams.from_offsets()
NF_DBM = noise_floor_dbm(NoiseParams())
CS = [p for p in Protocol if p is not Protocol.NON_CS]


def test_six_protocols_and_parsing():
    assert len(Protocol) == 6
    for name in ("non-cs", "ocst", "dcst", "ocsr", "dcsr", "dcsra"):
        assert Protocol.parse(name).value == name
    assert Protocol.parse("NonCS") is Protocol.NON_CS
    assert Protocol.parse("DCSR") is Protocol.DCSR
    with pytest.raises(ValueError):
        Protocol.parse("csma")
    assert Protocol.DCSRA.family is Family.CSR and Protocol.DCST.family is Family.CST
    assert Protocol.DCSRA.announces and not Protocol.DCSR.announces


def test_sensing_params_validation():
    with pytest.raises(ValueError):
        SensingParams(0.0, 1.0, 1.0, 1.0)
    assert S.p_th == pytest.approx(10 ** ((NF_DBM + 15) / 10))
    assert 10 * math.log10(S.p_th) == pytest.approx(-61.218, abs=1e-3)


class TestSensingGain:
    def test_ocsr(self):
        g = sensing_gain_distribution(Protocol.OCSR, A)
        omni = 10 ** -0.7
        np.testing.assert_allclose(
            g.gains, [403.81270 * 100.95317 * omni, 3.2398288 * 100.95317 * omni], rtol=1e-6
        )
        np.testing.assert_allclose(g.probs, [1 / 36, 35 / 36], rtol=1e-13)

    def test_ocst(self):
        g = sensing_gain_distribution(Protocol.OCST, A)
        mb, sb = array_gains(64)
        omni = 10 ** -0.7
        np.testing.assert_allclose(g.gains, [mb * mb * omni, sb * mb * omni], rtol=1e-13)
        np.testing.assert_allclose(g.probs, [1 / 36, 35 / 36], rtol=1e-13)

    def test_dcst(self):
        g = sensing_gain_distribution(Protocol.DCST, A)
        mb, sb = array_gains(64)
        np.testing.assert_allclose(g.gains, [mb * mb, mb * sb, sb * mb, sb * sb], rtol=1e-13)
        np.testing.assert_allclose(g.probs, np.array([1, 35, 35, 35 * 35]) / 1296, rtol=1e-13)

    def test_dcsr_equals_interferer_gain(self):
        ref = interferer_gain_distribution(A)
        for p in (Protocol.DCSR, Protocol.DCSRA):
            g = sensing_gain_distribution(p, A)
            np.testing.assert_array_equal(g.gains, ref.gains)
            np.testing.assert_array_equal(g.probs, ref.probs)

    @pytest.mark.parametrize("p", CS)
    def test_sums_to_one(self, p):
        assert abs(sensing_gain_distribution(p, A).probs.sum() - 1) <= 1e-12

    def test_noncs_rejected(self):
        with pytest.raises(ValueError):
            sensing_gain_distribution(Protocol.NON_CS, A)


class TestSensingDistance:
    def test_dcsr_main_los_link_budget(self):
        law = sensing_distance_law(Protocol.DCSR, S, A, PL)
        mb, _ = array_gains(64)
        mu, _ = array_gains(16)
        delta_db = 36.0 - 60.0 + 10 * math.log10(mu * mb) - (NF_DBM + 15.0)
        expected = 10 ** (delta_db / 20.0)
        assert law.mainlobe[LinkType.LOS].radii[0] == pytest.approx(expected, rel=1e-12)
        assert law.cs_beamwidth == pytest.approx(math.pi / 6)

    def test_doubling_threshold_scales_radii(self):
        s2 = SensingParams(2 * S.p_th, S.p_th_a, S.p_x, S.p_u)
        for p in CS:
            t1 = sensing_distance_law(p, S, A, PL).table()
            t2 = sensing_distance_law(p, s2, A, PL).table()
            np.testing.assert_allclose(t1[0] / t2[0], math.sqrt(2), rtol=1e-12)
            np.testing.assert_allclose(t1[1] / t2[1], 2**0.25, rtol=1e-12)

    @pytest.mark.parametrize("p", [Protocol.OCST, Protocol.OCSR])
    def test_omni_laws_are_lobe_symmetric(self, p):
        law = sensing_distance_law(p, S, A, PL)
        assert law.cs_beamwidth == pytest.approx(2 * math.pi)
        for link in LinkType:
            assert law.mainlobe[link].radii == law.sidelobe[link].radii

    def test_beamwidths(self):
        assert sensing_distance_law(Protocol.DCST, S, A, PL).cs_beamwidth == pytest.approx(A.theta_bs)
        assert sensing_distance_law(Protocol.DCSRA, S, A, PL).cs_beamwidth == pytest.approx(A.theta_ue)

    @pytest.mark.parametrize("p", CS)
    def test_radii_monotone_in_gain(self, p):
        t = sensing_distance_law(p, S, A, PL).table()
        assert (t >= 0).all()
        # main-lobe contender is never heard closer than a side-lobe one
        assert (t[:, :, 0] >= t[:, :, 1]).all()
        assert (t[:, 0, :] >= t[:, 1, :]).all()

    @given(st.sampled_from(CS), st.floats(-20, 40), st.floats(-20, 40), st.floats(10, 50), st.floats(10, 50))
    def test_power_law_monotonicity(self, p, th1, th2, px1, px2):
        def table(th, px):
            s = SensingParams(10 ** ((NF_DBM + th) / 10), 1.0, 10 ** (px / 10), 1.0)
            return sensing_distance_law(p, s, A, PL).table()

        if abs(th1 - th2) > 1e-6:
            lo, hi = sorted((th1, th2))
            assert (table(lo, 36) > table(hi, 36)).all()
        if abs(px1 - px2) > 1e-6:
            lo, hi = sorted((px1, px2))
            assert (table(15, lo) < table(15, hi)).all()

    def test_directional_beats_omni(self):
        d = sensing_distance_law(Protocol.DCSR, S, A, PL)
        o = sensing_distance_law(Protocol.OCSR, S, A, PL)
        for link in LinkType:
            assert d.mainlobe[link].radii[0] > o.mainlobe[link].radii[0]

    def test_noncs_rejected(self):
        with pytest.raises(ValueError):
            sensing_distance_law(Protocol.NON_CS, S, A, PL)


class TestAnnouncement:
    def test_link_budget(self):
        ann = announcement_radii(S, A, PL)
        mb, sb = array_gains(64)
        mu, _ = array_gains(16)
        pth_a = NF_DBM + 0.0
        expected = 10 ** ((15 - 60 + 10 * math.log10(mb * mu * 10**-0.7) - pth_a) / 20)
        assert ann.R_a_los == pytest.approx(expected, rel=1e-12)
        expected_n = 10 ** ((15 - 70 + 10 * math.log10(sb * mu * 10**-0.7) - pth_a) / 40)
        assert ann.r_a_nlos == pytest.approx(expected_n, rel=1e-12)

    def test_main_at_least_side(self):
        ann = announcement_radii(S, A, PL)
        assert ann.R_a_los >= ann.r_a_los and ann.R_a_nlos >= ann.r_a_nlos

    def test_raising_threshold_20db(self):
        s2 = SensingParams(S.p_th, S.p_th_a * 100, S.p_x, S.p_u)
        assert announcement_radii(S, A, PL).R_a_los / announcement_radii(s2, A, PL).R_a_los == pytest.approx(10.0)


NF = noise_floor(NoiseParams())


class TestPredicates:
    @pytest.mark.parametrize("pred", [is_hidden_interferer, is_deaf_interferer])
    def test_exact_threshold_is_not_missed(self, pred):
        gain = S.p_th / S.p_x
        assert pred(Family.CSR, gain, 10 * NF, S, NF) is False

    @pytest.mark.parametrize("pred", [is_hidden_interferer, is_deaf_interferer])
    def test_below_noise_is_harmless(self, pred):
        assert pred(Family.CST, 1e-30, 0.5 * NF, S, NF) is False

    def test_noncs_only_checks_noise(self):
        assert is_hidden_interferer(Family.NONE, 1.0, 2 * NF, S, NF) is True

    @given(st.floats(-200, 0), st.floats(-120, -40), st.sampled_from([Family.CST, Family.CSR]))
    def test_brute_force_and_shared_shape(self, g_db, i_dbm, fam):
        g = 10 ** (g_db / 10)
        i = 10 ** (i_dbm / 10)
        direct = (S.p_x * g < S.p_th) and (i > NF)
        assert is_hidden_interferer(fam, g, i, S, NF) == direct
        assert is_deaf_interferer(fam, g, i, S, NF) == direct
