import numpy as np
import pytest

from irs_slp.channel import ChannelSet
from irs_slp.geometry import (CapacityError, build_coefficients_joint,
                              build_coefficients_standalone, ci_distance,
                              enumerate_symbol_vectors, make_constellation,
                              rotate)
from irs_slp.simulate import detect_psk


def direct_objective(a_rows, theta, psi):
    """Independent evaluation of max_i |Im{a_i^H theta}|cos - Re{a_i^H theta}sin."""
    u = a_rows @ theta
    return np.max(np.abs(u.imag) * np.cos(psi) - u.real * np.sin(psi))


class TestConstellation:
    def test_bpsk_points(self):
        c = make_constellation(2)
        assert np.allclose(c.points, [1.0, -1.0])
        assert c.half_angle == pytest.approx(np.pi / 2)

    def test_qpsk_points(self):
        c = make_constellation(4)
        assert np.allclose(c.points[0], np.exp(1j * np.pi / 4))
        assert np.allclose(np.abs(c.points), 1.0)
        # equally spaced by 2*pi/4
        ang = np.sort(np.angle(c.points) % (2 * np.pi))
        assert np.allclose(np.diff(ang), np.pi / 2)

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            make_constellation(3)
        with pytest.raises(ValueError):
            make_constellation(1)


class TestEnumerate:
    def test_bpsk_singleton(self):
        book = enumerate_symbol_vectors(2, 1)
        assert np.allclose(book.vectors, [[1.0], [-1.0]])

    def test_qpsk_two_users(self):
        book = enumerate_symbol_vectors(4, 2)
        assert book.n_vectors == 16
        assert np.allclose(book.vectors[0],
                           [np.exp(1j * np.pi / 4), np.exp(1j * np.pi / 4)])

    def test_qpsk_three_users_unique(self):
        book = enumerate_symbol_vectors(4, 3)
        assert book.n_vectors == 64
        as_tuples = {tuple(row) for row in book.indices}
        assert len(as_tuples) == 64

    def test_lexicographic(self):
        book = enumerate_symbol_vectors(4, 2)
        # first user index is the most significant digit
        assert np.array_equal(book.indices[:5, 0], [0, 0, 0, 0, 1])
        assert np.array_equal(book.indices[:5, 1], [0, 1, 2, 3, 0])

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            enumerate_symbol_vectors(4, 11)   # 4**11 > 2**20


class TestCiDistance:
    def test_on_axis(self):
        assert ci_distance(1.0 + 0j, np.pi / 4) == pytest.approx(np.sin(np.pi / 4))

    def test_decision_boundary(self):
        assert ci_distance(np.exp(1j * np.pi / 4), np.pi / 4) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        assert ci_distance(1.0 + 0.5j, np.pi / 4) == pytest.approx(0.35355, abs=1e-5)

    def test_signed(self):
        assert ci_distance(np.exp(1j * 0.9 * np.pi), np.pi / 4) < 0


class TestRotate:
    def test_phase_subtraction(self):
        out = rotate(np.exp(1j * np.pi / 2), np.exp(1j * np.pi / 4))
        assert np.allclose(out, np.exp(1j * np.pi / 4))

    def test_identity(self):
        assert rotate(0.3 - 0.7j, 1.0) == pytest.approx(0.3 - 0.7j)

    def test_self_rotation(self):
        r = 1.7 * np.exp(1j * 2.1)
        assert rotate(r, r / np.abs(r)) == pytest.approx(np.abs(r))


class TestStandaloneBundle:
    def test_hand_rows(self):
        bundle = build_coefficients_standalone(
            np.array([[1.0 + 0j]]), np.array([1.0 + 0j]), 1.0, np.pi / 4)
        assert np.allclose(bundle.b_rows[0, 0], -0.70711 - 0.70711j, atol=1e-5)
        assert np.allclose(bundle.c_rows[0, 0], -0.70711 + 0.70711j, atol=1e-5)
        assert np.allclose(bundle.offsets_w, 0)

    def test_alpha_scaling(self):
        rng = np.random.default_rng(2)
        h = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        s = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
        b1 = build_coefficients_standalone(h, s, 1.0, np.pi / 4)
        b2 = build_coefficients_standalone(h, s, 2.0, np.pi / 4)
        assert np.allclose(b2.b_rows, b1.b_rows / 2)
        assert np.allclose(b2.c_rows, b1.c_rows / 2)

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            build_coefficients_standalone(np.ones((1, 2)), np.ones(1), 0.0, np.pi / 4)

    def test_split_identity_vs_direct(self):
        # max{Re(b^H th), Re(c^H th)} equals the absolute-value objective
        rng = np.random.default_rng(7)
        for _ in range(20):
            k, n = rng.integers(1, 4), rng.integers(1, 6)
            h = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
            s = np.exp(1j * rng.uniform(0, 2 * np.pi, k))
            alpha = rng.uniform(0.2, 3.0, k)
            psi = rng.uniform(0.1, 1.4)
            bundle = build_coefficients_standalone(h, s, alpha, psi)
            theta = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
            a_rows = h.conj() * (s.conj() / np.abs(s))[:, None] / alpha[:, None]
            assert bundle.max_margin(theta) == pytest.approx(
                direct_objective(a_rows, theta, psi), abs=1e-12)

    def test_channel_homogeneity(self):
        rng = np.random.default_rng(3)
        h = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        s = np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
        gamma = 2.7
        b1 = build_coefficients_standalone(h, s, 1.0, 0.6)
        h2 = h.copy()
        h2[0] *= gamma
        b2 = build_coefficients_standalone(h2, s, 1.0, 0.6)
        assert np.allclose(b2.b_rows[0], gamma * b1.b_rows[0])
        assert np.allclose(b2.b_rows[1], b1.b_rows[1])


def _random_joint(rng, n_m, k, n, m_ant):
    channels = ChannelSet(
        direct=rng.standard_normal((k, m_ant)) + 1j * rng.standard_normal((k, m_ant)),
        irs_user=rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)),
        bs_irs=rng.standard_normal((n, m_ant)) + 1j * rng.standard_normal((n, m_ant)),
        sir_direct=rng.standard_normal(m_ant) + 1j * rng.standard_normal(m_ant),
        sir_irs=rng.standard_normal(n) + 1j * rng.standard_normal(n),
    )
    X = rng.standard_normal((n_m, m_ant)) + 1j * rng.standard_normal((n_m, m_ant))
    return channels, X


class TestJointBundle:
    def test_row_pair_count(self):
        # (2K+1) * Omega**K index pairs: primary rows in state pairs plus one
        # secondary index per symbol vector carrying both sign constraints
        rng = np.random.default_rng(0)
        book = enumerate_symbol_vectors(2, 1)
        channels, X = _random_joint(rng, book.n_vectors, 1, 3, 2)
        bundle = build_coefficients_joint(X, channels, book, 1.0, 0.5,
                                          book.half_angle)
        assert bundle.pair_count == (2 * 1 + 1) * 2    # 6
        assert bundle.n_vars == 2 * 3
        # index layout: primary pairs first, secondary rows after
        assert bundle.index_map[:4] == [("pir", 0, 0, 0), ("pir", 0, 0, 1),
                                        ("pir", 1, 0, 0), ("pir", 1, 0, 1)]
        assert bundle.index_map[4:] == [("sir", 0), ("sir", 1)]

    def test_zero_irs_channels(self):
        rng = np.random.default_rng(1)
        book = enumerate_symbol_vectors(2, 1)
        channels, X = _random_joint(rng, book.n_vectors, 1, 3, 2)
        channels.irs_user = np.zeros_like(channels.irs_user)
        channels.sir_irs = np.zeros_like(channels.sir_irs)
        bundle = build_coefficients_joint(X, channels, book, 1.0, 0.5,
                                          book.half_angle)
        assert np.allclose(bundle.b_rows, 0)
        assert np.allclose(bundle.c_rows, 0)
        t1 = np.exp(1j * rng.uniform(0, 2 * np.pi, 6))
        t2 = np.exp(1j * rng.uniform(0, 2 * np.pi, 6))
        expected = max(bundle.offsets_w.real.max(), bundle.offsets_z.real.max())
        assert bundle.max_margin(t1) == pytest.approx(expected)
        assert bundle.max_margin(t2) == pytest.approx(expected)

    def test_beta_scaling(self):
        rng = np.random.default_rng(2)
        book = enumerate_symbol_vectors(2, 1)
        channels, X = _random_joint(rng, book.n_vectors, 1, 3, 2)
        b1 = build_coefficients_joint(X, channels, book, 1.0, 0.5, book.half_angle)
        b2 = build_coefficients_joint(X, channels, book, 1.0, 1.0, book.half_angle)
        is_sir = np.array([tag[0] == "sir" for tag in b1.index_map])
        assert np.allclose(b2.b_rows[is_sir], b1.b_rows[is_sir] / 2)
        assert np.allclose(b2.offsets_w[is_sir], b1.offsets_w[is_sir] / 2)
        assert np.allclose(b2.offsets_z[is_sir], b1.offsets_z[is_sir] / 2)
        assert np.allclose(b2.b_rows[~is_sir], b1.b_rows[~is_sir])
        assert np.allclose(b2.offsets_w[~is_sir], b1.offsets_w[~is_sir])

    def test_max_margin_vs_direct_evaluation(self):
        # oracle: recompute every constraint margin from the raw channels
        rng = np.random.default_rng(3)
        for _ in range(10):
            k, n, m_ant = rng.integers(1, 3), rng.integers(1, 4), rng.integers(2, 4)
            book = enumerate_symbol_vectors(2, int(k))
            channels, X = _random_joint(rng, book.n_vectors, int(k), int(n), int(m_ant))
            alpha = rng.uniform(0.5, 2.0, int(k))
            beta = rng.uniform(0.2, 1.5)
            psi = book.half_angle
            bundle = build_coefficients_joint(X, channels, book, alpha, beta, psi)
            theta = np.exp(1j * rng.uniform(0, 2 * np.pi, 2 * int(n)))
            th0, th1 = theta[:int(n)], theta[int(n):]
            worst = -np.inf
            for m in range(book.n_vectors):
                for kk in range(int(k)):
                    for st, th in enumerate((th0, th1)):
                        h = channels.direct[kk] + (channels.bs_irs.conj().T
                                                   @ (th.conj() * channels.irs_user[kk]))
                        y = rotate(h.conj() @ X[m], book.vectors[m, kk])
                        worst = max(worst, -ci_distance(y, psi) / alpha[kk])
                hs0 = channels.sir_direct + (channels.bs_irs.conj().T
                                             @ (th0.conj() * channels.sir_irs))
                hs1 = channels.sir_direct + (channels.bs_irs.conj().T
                                             @ (th1.conj() * channels.sir_irs))
                worst = max(worst, (hs0.conj() @ X[m]).real / beta)
                worst = max(worst, -(hs1.conj() @ X[m]).real / beta)
            assert bundle.max_margin(theta) == pytest.approx(worst, abs=1e-12)

    def test_no_sir_variant(self):
        rng = np.random.default_rng(4)
        book = enumerate_symbol_vectors(2, 1)
        channels, X = _random_joint(rng, book.n_vectors, 1, 3, 2)
        bundle = build_coefficients_joint(X, channels, book, 1.0, None,
                                          book.half_angle, with_sir=False)
        assert bundle.pair_count == 2      # one state per (m, k)
        assert bundle.n_vars == 3

    def test_beta_required_with_sir(self):
        rng = np.random.default_rng(5)
        book = enumerate_symbol_vectors(2, 1)
        channels, X = _random_joint(rng, book.n_vectors, 1, 2, 2)
        with pytest.raises(ValueError):
            build_coefficients_joint(X, channels, book, 1.0, None, book.half_angle)
        with pytest.raises(ValueError):
            build_coefficients_joint(X, channels, book, 1.0, -1.0, book.half_angle)


class TestDetectorConsistency:
    def test_positive_margin_implies_correct_decision(self):
        # exhaustive grid: whenever the rotated margin is positive, the
        # hard-decision detector recovers the intended symbol
        const = make_constellation(4)
        psi = const.half_angle
        re, im = np.meshgrid(np.linspace(-2, 2, 81), np.linspace(-2, 2, 81))
        grid = (re + 1j * im).ravel()
        for idx, s in enumerate(const.points):
            for r in grid:
                if ci_distance(rotate(r, s), psi) > 1e-9:
                    assert detect_psk(r, 4) == idx
