import numpy as np
import pytest

from irs_slp.channel import (ChannelSet, LinkSpec, ScenarioConfig,
                             channels_from_csv, channels_to_csv,
                             compound_channel_joint, draw_channels,
                             draw_rician, effective_channel_standalone,
                             effective_channels, joint_scenario, path_loss,
                             standalone_scenario)


class TestPathLoss:
    def test_reference_distance_identity(self):
        assert path_loss(1.0, 3.0, 1e-3, 1.0) == pytest.approx(1e-3)

    def test_hundred_meters_exponent_three(self):
        # 1e-3 * (1/100)^3 = 1e-9, i.e. -90 dB
        assert path_loss(100.0, 3.0, 1e-3, 1.0) == pytest.approx(1e-9)

    def test_fractional_exponent(self):
        # hand evaluation: 1e-3 * 10^-2.5
        assert path_loss(10.0, 2.5, 1e-3, 1.0) == pytest.approx(1e-3 * 10 ** -2.5)
        assert path_loss(10.0, 2.5, 1e-3, 1.0) == pytest.approx(3.1623e-6, rel=1e-4)

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ValueError):
            path_loss(0.0, 3.0)
        with pytest.raises(ValueError):
            path_loss(-1.0, 3.0)
        with pytest.raises(ValueError):
            path_loss(10.0, 3.0, ref_distance=0.0)


class TestDrawRician:
    def test_pure_los_limit(self):
        rng = np.random.default_rng(0)
        los = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(4, 5)))
        out = draw_rician(4, 5, 1e12, los, 1.0, seed=7)
        assert np.abs(out - los).max() < 1e-5

    def test_rayleigh_moment(self):
        # kappa=0: second moment of entries equals avg_gain within 1% at 1e5 draws
        los = np.ones((100, 1000))
        out = draw_rician(100, 1000, 0.0, los, 2.5, seed=3)
        moment = np.mean(np.abs(out) ** 2) / 2.5
        assert 0.99 < moment < 1.01

    def test_seed_determinism(self):
        los = np.ones((3, 4))
        a = draw_rician(3, 4, 1.0, los, 0.5, seed=11)
        b = draw_rician(3, 4, 1.0, los, 0.5, seed=11)
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            draw_rician(3, 4, 1.0, np.ones((4, 3)), 1.0, seed=0)

    def test_negative_kappa(self):
        with pytest.raises(ValueError):
            draw_rician(2, 2, -0.5, np.ones((2, 2)), 1.0, seed=0)


class TestEffectiveChannel:
    def test_hand_example(self):
        h_k = effective_channel_standalone(np.array([1.0, 1j]), np.array([1.0, 2.0]))
        # row h_k^H = h_rk^H diag(h_g) = [1, -2j]
        assert np.allclose(h_k.conj(), [1.0, -2j])

    def test_identity_diagonal(self):
        h_rk = np.array([0.3 + 0.4j, -1.0, 2j])
        assert np.allclose(effective_channel_standalone(h_rk, np.ones(3)), h_rk)

    def test_zero_input(self):
        assert np.allclose(effective_channel_standalone(np.zeros(4), np.ones(4)), 0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            effective_channel_standalone(np.ones(3), np.ones(4))


class TestCompoundChannel:
    def test_no_irs_reduction(self):
        h_k = np.array([1.0 + 1j, 2.0])
        out = compound_channel_joint(h_k, np.zeros(3), np.ones((3, 2)), np.ones(3))
        assert np.allclose(out, h_k)

    def test_destructive_phase(self):
        out = compound_channel_joint(np.array([1.0]), np.array([1.0]),
                                     np.array([[1.0]]), np.array([np.exp(1j * np.pi)]))
        assert np.abs(out[0]) < 1e-12

    def test_identity_reflection(self):
        rng = np.random.default_rng(5)
        h_rk = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        G = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        out = compound_channel_joint(np.zeros(3), h_rk, G, np.ones(4))
        # h^H = h_rk^H G
        assert np.allclose(out.conj(), h_rk.conj() @ G)

    def test_affine_in_theta(self):
        rng = np.random.default_rng(9)
        h_k = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        h_rk = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        G = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
        t1 = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        t2 = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        lhs = compound_channel_joint(h_k, h_rk, G, t1 + t2)
        rhs = (compound_channel_joint(h_k, h_rk, G, t1)
               + compound_channel_joint(h_k, h_rk, G, t2)
               - compound_channel_joint(h_k, h_rk, G, np.zeros(5)))
        assert np.allclose(lhs, rhs)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            compound_channel_joint(np.ones(3), np.ones(4), np.ones((5, 3)), np.ones(4))


class TestScenario:
    def test_validation(self):
        with pytest.raises(ValueError):
            standalone_scenario(constellation_order=3)   # not a power of 2
        with pytest.raises(ValueError):
            standalone_scenario(n_users=0)
        with pytest.raises(ValueError):
            joint_scenario(embedding_length=0)
        with pytest.raises(ValueError):
            LinkSpec(distance=-5.0, exponent=3.0)

    def test_paper_defaults(self):
        cfg = joint_scenario()
        assert cfg.noise_power == pytest.approx(1e-11)        # -80 dBm
        assert cfg.rician_factor == pytest.approx(10 ** 0.3)  # 3 dB
        assert cfg.links["bs_irs"].exponent == 2.5
        assert cfg.links["irs_user"].rician_factor == 0.0     # NLoS only

    def test_draw_reproducible(self):
        cfg = joint_scenario(n_irs_elements=6, n_users=2, rng_seed=4)
        a = draw_channels(cfg, trial=2, system="joint")
        b = draw_channels(cfg, trial=2, system="joint")
        for name in ("direct", "irs_user", "bs_irs", "sir_direct", "sir_irs"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_trials_independent(self):
        cfg = standalone_scenario(n_irs_elements=6, n_users=2, rng_seed=4)
        a = draw_channels(cfg, trial=0)
        b = draw_channels(cfg, trial=1)
        assert not np.allclose(a.irs_user, b.irs_user)

    def test_nlos_second_moment(self):
        # empirical per-entry power of an NLoS link matches the path gain
        cfg = standalone_scenario(n_irs_elements=500, n_users=300, rng_seed=1)
        cfg.links["irs_user"] = LinkSpec(distance=100.0, exponent=3.0,
                                         rician_factor=0.0)
        chs = draw_channels(cfg, trial=0)
        gain = path_loss(100.0, 3.0, 1e-3, 1.0)
        moment = np.mean(np.abs(chs.irs_user) ** 2) / gain
        assert 0.99 < moment < 1.01

    def test_effective_channels_shape(self):
        cfg = standalone_scenario(n_irs_elements=8, n_users=3, rng_seed=0)
        chs = draw_channels(cfg)
        eff = effective_channels(chs)
        assert eff.shape == (3, 8)
        assert np.allclose(eff[1], effective_channel_standalone(
            chs.irs_user[1], chs.generator_irs))


class TestCsvRoundTrip:
    def test_joint_round_trip(self, tmp_path):
        cfg = joint_scenario(n_irs_elements=5, n_users=2, n_bs_antennas=3, rng_seed=8)
        chs = draw_channels(cfg, system="joint")
        fn = tmp_path / "channels.csv"
        channels_to_csv(chs, fn)
        back = channels_from_csv(fn)
        for name in ("direct", "irs_user", "bs_irs", "sir_direct", "sir_irs"):
            assert np.array_equal(getattr(chs, name), getattr(back, name))
        assert back.generator_irs is None

    def test_standalone_round_trip(self, tmp_path):
        cfg = standalone_scenario(n_irs_elements=4, n_users=2, rng_seed=8)
        chs = draw_channels(cfg)
        fn = tmp_path / "channels.csv"
        channels_to_csv(chs, fn)
        back = channels_from_csv(fn)
        assert np.array_equal(chs.generator_irs, back.generator_irs)
        assert np.array_equal(chs.irs_user, back.irs_user)
