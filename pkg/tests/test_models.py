"""Source-model tests: pulse-shape oracles, covariance structure, sampling."""

import numpy as np
import pytest

from cyclosep import models


def empirical_cov(model, tau, n, count, seed, chunk=20000):
    """Sample-average outer products, accumulated in chunks."""
    rng = np.random.default_rng(seed)
    acc = np.zeros((n, n), dtype=np.complex128)
    left = count
    while left > 0:
        m = min(chunk, left)
        s = models.sample_source_batch(model, tau, n, m, rng)
        acc += s @ s.conj().T
        left -= m
    return acc / count


def assert_cov_close(emp, cov, count, n_sigma=5.0):
    """Entrywise |emp - cov| against n_sigma standard errors.

    For circular complex Gaussians the sample-covariance entry (i, j) has
    variance C_ii * C_jj / count around C_ij.
    """
    d = np.sqrt(np.diag(cov).real)
    se = np.outer(d, d) / np.sqrt(count)
    np.testing.assert_array_less(np.abs(emp - cov), n_sigma * se + 1e-30)


class TestRRCTaps:
    def test_matches_spectrum_integral(self):
        """Tap ratios agree with numerical integration of the square-root
        raised-cosine spectrum (values frozen from scipy.integrate.quad;
        integrator accurate to ~1e-9).  Ratios to the center tap factor
        out the unit-energy normalization."""
        taps = models.rrc_taps(0.5, 16, 8)
        center = 64
        frozen = {
            0: 1.1366197723675817,    # t = 0, removable singularity
            8: 0.5786324691549835,    # t = 1/(4 rolloff), removable singularity
            4: 0.9744953584043594,
            16: -0.10610329550814088,
            40: -0.015005271457707518,
            61: -0.00664380469942813,
        }
        for k, ref in frozen.items():
            assert taps[center + k] / taps[center] == pytest.approx(
                ref / frozen[0], abs=5e-8
            )

    def test_unit_energy(self):
        for rolloff, sps, span in [(0.5, 16, 8), (0.35, 8, 6), (0.22, 4, 10)]:
            taps = models.rrc_taps(rolloff, sps, span)
            assert np.sum(taps**2) == pytest.approx(1.0, abs=1e-14)

    def test_matches_direct_formula_with_limit_averaging(self):
        """Full tap vector against an in-test reimplementation that fills
        each removable singularity by averaging the general formula at
        t +- 1e-6 symbol periods."""
        rolloff, sps, span = 0.5, 16, 8

        def general(t):
            num = (np.sin(np.pi * t * (1 - rolloff))
                   + 4 * rolloff * t * np.cos(np.pi * t * (1 + rolloff)))
            return num / (np.pi * t * (1 - (4 * rolloff * t) ** 2))

        ks = np.arange(-span * sps // 2, span * sps // 2 + 1)
        ref = np.empty(ks.size)
        for i, k in enumerate(ks):
            t = k / sps
            if k == 0 or abs(abs(t) - 1.0 / (4 * rolloff)) < 1e-12:
                ref[i] = 0.5 * (general(t - 1e-6) + general(t + 1e-6))
            else:
                ref[i] = general(t)
        ref /= np.sqrt(np.sum(ref**2))
        np.testing.assert_allclose(models.rrc_taps(rolloff, sps, span), ref,
                                   atol=1e-6, rtol=0)

    def test_singularities_continuous(self):
        """The two special-case branches agree with the general branch
        evaluated just off the singular points."""
        b, sps = 0.5, 10000
        taps = models.rrc_taps(b, sps, 2)
        center = sps
        t_sing = 1.0 / (4.0 * b)
        k_sing = int(round(t_sing * sps))
        assert taps[center + k_sing] == pytest.approx(taps[center + k_sing + 1], rel=2e-3)
        assert taps[center] == pytest.approx(taps[center + 1], rel=2e-3)

    def test_even_symmetry(self):
        taps = models.rrc_taps(0.35, 8, 6)
        np.testing.assert_array_equal(taps, taps[::-1])

    def test_rejects_bad_rolloff(self):
        with pytest.raises(ValueError):
            models.rrc_taps(0.0, 16, 8)
        with pytest.raises(ValueError):
            models.rrc_taps(1.5, 16, 8)


@pytest.fixture(scope="module")
def small_models():
    return {
        "block": models.make_block_model(3, block_seed=7, buffer_len=60),
        "rrc": models.make_rrc_model(sps=4, span_symbols=4, rolloff=0.5),
        "ofdm": models.make_ofdm_model(n_subcarriers=8, cp_length=2),
    }


class TestCovarianceInvariants:
    @pytest.mark.parametrize("kind", ["block", "rrc", "ofdm"])
    def test_hermitian_psd(self, small_models, kind):
        model = small_models[kind]
        n = 4 * model.period
        for tau in range(model.period):
            cov = models.conditional_covariance(model, tau, n)
            herm_dev = np.max(np.abs(cov - cov.conj().T))
            assert herm_dev <= 1e-12
            evals = np.linalg.eigvalsh(cov)
            assert evals[0] >= -1e-9 * max(evals[-1], 1e-30)

    @pytest.mark.parametrize("kind", ["block", "rrc", "ofdm"])
    def test_periodic_in_tau(self, small_models, kind):
        model = small_models[kind]
        n = 2 * model.period
        for tau in range(model.period):
            a = models.conditional_covariance(model, tau, n)
            b = models.conditional_covariance(model, tau + model.period, n)
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("kind", ["block", "rrc", "ofdm"])
    def test_marginal_toeplitz_unit_diag(self, small_models, kind):
        model = small_models[kind]
        n = 3 * model.period
        marg = models.marginal_covariance(model, n)
        first = np.concatenate([marg[0, ::-1], marg[1:, 0]])
        i, j = np.indices((n, n))
        np.testing.assert_allclose(marg, first[i - j + n - 1], atol=1e-12, rtol=0)
        np.testing.assert_allclose(np.diag(marg).real, 1.0, atol=1e-9, rtol=0)
        np.testing.assert_allclose(np.diag(marg).imag, 0.0, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("kind", ["rrc", "ofdm"])
    def test_window_shift_identity(self, small_models, kind):
        """An offset window is the corresponding sub-block of a longer
        zero-offset window."""
        model = small_models[kind]
        n = 3 * model.period
        for tau in (1, model.period - 1):
            wide = models.conditional_covariance(model, 0, n + tau)
            sub = wide[tau:, tau:]
            off = models.conditional_covariance(model, tau, n)
            np.testing.assert_allclose(off, sub, atol=1e-12, rtol=0)

    def test_block_window_shift_identity(self, small_models):
        model = small_models["block"]
        n = 3 * model.period
        wide = models.conditional_covariance(model, 0, n + 2)
        off = models.conditional_covariance(model, 2, n)
        np.testing.assert_allclose(off, wide[2:, 2:], atol=1e-12, rtol=0)


class TestBlockStructure:
    def test_tiling(self):
        """Covariance at tau = 0 repeats scale^2 * B B^H down the diagonal
        and vanishes across block boundaries."""
        model = models.make_block_model(4, block_seed=3, buffer_len=40)
        p = model.period
        bbh = model.power_scale**2 * (model.block @ model.block.conj().T)
        cov = models.conditional_covariance(model, 0, 3 * p)
        for k in range(3):
            np.testing.assert_allclose(cov[k * p:(k + 1) * p, k * p:(k + 1) * p], bbh)
        np.testing.assert_array_equal(cov[:p, p:2 * p], 0.0)
        np.testing.assert_array_equal(cov[p:2 * p, 2 * p:], 0.0)

    def test_two_period_window_is_two_identical_blocks(self):
        """At tau = 0 a window of exactly two periods is block-diagonal
        with two copies of the single-block covariance."""
        model = models.make_block_model(11, block_seed=9, buffer_len=44)
        cov = models.conditional_covariance(model, 0, 22)
        bbh = model.power_scale**2 * (model.block @ model.block.conj().T)
        np.testing.assert_array_equal(cov[:11, :11], bbh)
        np.testing.assert_array_equal(cov[11:, 11:], bbh)
        np.testing.assert_array_equal(cov[:11, 11:], 0.0)
        np.testing.assert_array_equal(cov[11:, :11], 0.0)

    def test_zero_generator_samples_are_zero(self):
        dead = models.BlockCovModel(period=3, buffer_len=30, block_seed=0,
                                    block=np.zeros((3, 3), dtype=np.complex128))
        s = models.sample_source(dead, 1, 12, np.random.default_rng(2))
        np.testing.assert_array_equal(s, 0.0)

    def test_degenerate_period_marginal_equals_conditional(self):
        model = models.make_block_model(1, block_seed=4, buffer_len=30)
        np.testing.assert_array_equal(
            models.marginal_covariance(model, 12),
            models.conditional_covariance(model, 0, 12),
        )

    def test_window_must_fit_buffer(self):
        model = models.make_block_model(5, block_seed=1, buffer_len=20)
        with pytest.raises(ValueError, match="buffer"):
            models.sample_source(model, 3, 18, np.random.default_rng(0))
        with pytest.raises(ValueError, match="buffer"):
            models.conditional_covariance(model, 3, 18)
        # exactly fitting is fine
        models.conditional_covariance(model, 3, 17)

    def test_deterministic_in_seed(self):
        a = models.make_block_model(6, block_seed=42)
        b = models.make_block_model(6, block_seed=42)
        np.testing.assert_array_equal(a.block, b.block)
        c = models.make_block_model(6, block_seed=43)
        assert np.max(np.abs(a.block - c.block)) > 1e-3


class TestRRCStructure:
    def test_marginal_is_pulse_autocorrelation(self):
        """Marginal covariance row equals the tap autocorrelation divided
        by the samples-per-symbol factor (then power-normalized)."""
        model = models.make_rrc_model(sps=4, span_symbols=6, rolloff=0.3)
        n = 30
        marg = models.marginal_covariance(model, n)
        auto = np.correlate(model.taps, model.taps, mode="full")
        mid = len(auto) // 2
        expect = np.zeros(n)
        avail = min(n, len(auto) - mid)
        expect[:avail] = model.power_scale**2 * auto[mid:mid + avail] / model.sps
        np.testing.assert_allclose(marg[:, 0].real, expect, atol=1e-12, rtol=0)
        np.testing.assert_allclose(marg[:, 0].imag, 0.0, atol=1e-14, rtol=0)


class TestOFDMStructure:
    def test_full_active_set_gives_white_symbols(self):
        """With every subcarrier active the time samples are white within a
        block, apart from the cyclic-prefix copy."""
        model = models.make_ofdm_model(n_subcarriers=8, cp_length=2,
                                       active_set=range(8))
        nb = model.period  # 10
        cov = models.conditional_covariance(model, 0, nb)
        expect = np.eye(nb, dtype=np.complex128)
        # prefix sample m is a copy of sample m + n_subcarriers
        expect[0, 8] = expect[8, 0] = 1.0
        expect[1, 9] = expect[9, 1] = 1.0
        np.testing.assert_allclose(cov, expect, atol=1e-12, rtol=0)

    def test_cyclic_prefix_copy_in_samples(self):
        model = models.make_ofdm_model()
        s = models.sample_source(model, 0, 160, np.random.default_rng(5))
        np.testing.assert_allclose(s[:16], s[64:80], rtol=0, atol=1e-12)
        np.testing.assert_allclose(s[80:96], s[144:160], rtol=0, atol=1e-12)

    def test_cross_symbol_independence(self):
        model = models.make_ofdm_model(n_subcarriers=8, cp_length=2)
        cov = models.conditional_covariance(model, 0, 20)
        np.testing.assert_array_equal(cov[:10, 10:], 0.0)

    def test_marginal_first_row_matches_direct_double_sum(self):
        """First row of the offset-averaged covariance against a brute-force
        sum over blocks and active subcarriers, using only the definition
        of the prefixed block waveform."""
        model = models.make_ofdm_model()
        nsc, ncp = model.n_subcarriers, model.cp_length
        nb = model.period
        n = 2 * nb
        ell = np.array(model.active_set)
        row = np.zeros(n, dtype=np.complex128)
        for tau in range(nb):
            a = tau  # index of window sample 0 inside its block (p = 0)
            qa = np.exp(2j * np.pi * ell * (a - ncp) / nsc)
            for m in range(n):
                bm = m + tau
                if bm < nb:
                    qb = np.exp(2j * np.pi * ell * (bm - ncp) / nsc)
                    row[m] += np.sum(qa * np.conj(qb)) / nsc
        row *= model.power_scale**2 / nb
        marg = models.marginal_covariance(model, n)
        np.testing.assert_allclose(marg[0], row, atol=1e-10, rtol=0)

    def test_unnormalized_power_is_active_fraction(self):
        model = models.OFDMModel(n_subcarriers=8, cp_length=2,
                                 active_set=tuple(range(1, 8)))
        marg = models.marginal_covariance(model, 10)
        np.testing.assert_allclose(np.diag(marg).real, 7.0 / 8.0, atol=1e-12)
        unit = models.normalize_power(model)
        marg1 = models.marginal_covariance(unit, 10)
        np.testing.assert_allclose(np.diag(marg1).real, 1.0, atol=1e-12)


class TestSamplingMatchesCovariance:
    """Monte Carlo check that the samplers realize the covariances they claim."""

    @pytest.mark.parametrize("kind,tau", [("block", 0), ("block", 2),
                                          ("rrc", 0), ("rrc", 3),
                                          ("ofdm", 0), ("ofdm", 5)])
    def test_empirical_covariance(self, small_models, kind, tau):
        model = small_models[kind]
        n = 3 * model.period
        count = 40000
        emp = empirical_cov(model, tau, n, count, seed=100 + tau)
        cov = models.conditional_covariance(model, tau, n)
        assert_cov_close(emp, cov, count)

    def test_mean_is_zero(self, small_models):
        model = small_models["rrc"]
        rng = np.random.default_rng(9)
        s = models.sample_source_batch(model, 0, 12, 40000, rng)
        mean = s.mean(axis=1)
        assert np.max(np.abs(mean)) < 5.0 / np.sqrt(40000)


class TestSamplingContract:
    def test_deterministic_given_rng_state(self, small_models):
        for model in small_models.values():
            a = models.sample_source(model, 1, 16, np.random.default_rng(77))
            b = models.sample_source(model, 1, 16, np.random.default_rng(77))
            np.testing.assert_array_equal(a, b)

    def test_tau_out_of_range(self, small_models):
        for model in small_models.values():
            rng = np.random.default_rng(0)
            with pytest.raises(ValueError, match="tau"):
                models.sample_source(model, model.period, 8, rng)
            with pytest.raises(ValueError, match="tau"):
                models.sample_source(model, -1, 8, rng)

    def test_dtype_and_shape(self, small_models):
        for model in small_models.values():
            s = models.sample_source_batch(model, 0, 10, 3, np.random.default_rng(1))
            assert s.shape == (10, 3)
            assert s.dtype == np.complex128


class TestNormalizeAndConfig:
    def test_normalize_idempotent(self):
        m = models.make_rrc_model(sps=4, span_symbols=4, rolloff=0.5)
        again = models.normalize_power(m)
        assert again.power_scale == pytest.approx(m.power_scale, rel=1e-15)

    def test_amplitude_doubling_halves_scale(self):
        base = models.make_block_model(3, block_seed=2)
        from dataclasses import replace
        doubled = replace(base, block=2.0 * base.block, power_scale=1.0)
        renorm = models.normalize_power(doubled)
        np.testing.assert_allclose(renorm.power_scale,
                                   models.normalize_power(replace(base, power_scale=1.0)).power_scale / 2.0)

    @pytest.mark.parametrize("kind", ["block", "rrc", "ofdm"])
    def test_config_round_trip(self, small_models, kind, tmp_path):
        model = small_models[kind]
        path = tmp_path / f"{kind}.json"
        models.save_model(model, path)
        back = models.load_model(path)
        assert back.kind == model.kind
        assert back.power_scale == model.power_scale
        n = 2 * model.period
        np.testing.assert_array_equal(models.conditional_covariance(back, 1, n),
                                      models.conditional_covariance(model, 1, n))

    def test_bad_configs_rejected(self):
        with pytest.raises(ValueError):
            models.model_from_config({"kind": "warbler"})
        with pytest.raises(ValueError):
            models.model_from_config({})
        with pytest.raises(ValueError):
            models.OFDMModel(n_subcarriers=8, cp_length=8, active_set=(1,))
        with pytest.raises(ValueError):
            models.OFDMModel(n_subcarriers=8, cp_length=2, active_set=(3, 1))
        with pytest.raises(ValueError):
            models.BlockCovModel(period=4, buffer_len=30, block_seed=0,
                                 block=np.zeros((4, 4), dtype=complex))
        with pytest.raises(ValueError):
            models.RRCModel(sps=4, span_symbols=3, rolloff=0.5,
                            taps=np.zeros(13))
