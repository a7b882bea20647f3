"""Scene synthesis: shadowing fields, SLFs, PSDs, composition, sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import radioquant as rq
from radioquant.simkit import load_map_blob, save_map_blob


def params(xc=50.0, eta=6.0, gamma=2.0, emitter=(5.0, 5.0)):
    return rq.ShadowingParams(xc=xc, eta=eta, gamma=gamma, emitter=emitter)


class TestShadowField:
    def test_zero_variance_gives_zero_field(self):
        field = rq.gen_shadow_field(16, 16, params(eta=0.0), seed=3)
        assert np.all(field == 0.0)

    def test_perfect_correlation_limit(self):
        # xc -> infinity: the field degenerates to a single common value
        field = rq.gen_shadow_field(8, 8, params(xc=1e9, eta=6.0), seed=11)
        assert np.ptp(field) / 6.0 < 1e-3

    def test_seed_reproducibility_bit_identical(self):
        a = rq.gen_shadow_field(20, 20, params(), seed=7)
        b = rq.gen_shadow_field(20, 20, params(), seed=7)
        assert np.array_equal(a, b)
        c = rq.gen_shadow_field(20, 20, params(), seed=8)
        assert not np.array_equal(a, c)

    def test_rejects_nonpositive_decorrelation(self):
        with pytest.raises(ValueError):
            params(xc=0.0)
        with pytest.raises(ValueError):
            params(xc=-3.0)

    def test_correlation_at_decorrelation_distance(self):
        # Monte-Carlo estimate of E[f(p) f(p')] / eta^2 at distance d = xc
        # against the target exp(-1); 200 independent fields, 64x64 grid
        xc, eta = 50.0, 6.0
        p = params(xc=xc, eta=eta)
        acc = 0.0
        n = 0
        for seed in range(200):
            f = rq.gen_shadow_field(64, 64, p, seed=seed)
            acc += float(np.sum(f[:, :-50] * f[:, 50:]))
            n += f[:, :-50].size
        corr = acc / (n * eta * eta)
        assert abs(corr - np.exp(-1.0)) < 0.1

    def test_marginal_std_matches_eta(self):
        vals = [rq.gen_shadow_field(24, 24, params(eta=4.0), seed=s).ravel() for s in range(100)]
        assert abs(np.concatenate(vals).std() - 4.0) < 0.2


class TestSlf:
    def test_emitter_cell_is_grid_maximum(self):
        slf = rq.gen_slf(21, 21, params(eta=0.0, emitter=(10, 10)), seed=0)
        assert slf.grid[10, 10] == slf.grid.max()

    def test_isotropy_without_shadowing(self):
        slf = rq.gen_slf(21, 21, params(eta=0.0, emitter=(10, 10)), seed=0)
        assert slf.grid[10, 14] == pytest.approx(slf.grid[14, 10])
        assert slf.grid[7, 10] == pytest.approx(slf.grid[13, 10])

    def test_normalized_peak_exactly_one(self):
        slf = rq.gen_slf(51, 51, params(xc=50, eta=6, gamma=2.2, emitter=(25, 25)), seed=7)
        assert slf.grid.max() == 1.0

    def test_radially_nonincreasing_without_shadowing(self):
        slf = rq.gen_slf(31, 31, params(eta=0.0, gamma=2.4, emitter=(15, 15)), seed=0)
        d = np.hypot(*np.mgrid[0:31, 0:31] - 15.0)
        order = np.argsort(d.ravel())
        vals = slf.grid.ravel()[order]
        assert np.all(np.diff(vals) <= 1e-12)

    def test_nonnegative_entries(self):
        slf = rq.gen_slf(16, 16, params(), seed=5)
        assert np.all(slf.grid >= 0)


class TestPsd:
    def test_norm_bound_and_nonnegativity(self):
        for seed in range(20):
            psd = rq.gen_psd(64, 3, seed=seed, kappa=2.0)
            assert psd.values.min() >= 0
            assert psd.norm() <= 2.0 + 1e-12

    def test_subband_count_local_maxima(self):
        # enumerate strict local maxima above a quarter of the peak
        psd = rq.gen_psd(64, 3, seed=1)
        v = psd.values
        peaks = [
            k
            for k in range(1, 63)
            if v[k] > v[k - 1] and v[k] > v[k + 1] and v[k] > 0.25 * v.max()
        ]
        assert len(peaks) == 3

    def test_full_occupancy_flat_amplitudes(self):
        psd = rq.gen_psd(16, 16, seed=2, amp_range=(1.0, 1.0))
        assert np.all(psd.values > 0)

    def test_rejects_more_subbands_than_bins(self):
        with pytest.raises(ValueError):
            rq.gen_psd(8, 9, seed=0)


class TestCompose:
    def test_single_emitter_outer_product(self):
        x = rq.compose([np.ones((2, 2))], [np.array([1.0, 2.0])])
        assert np.all(x.tensor[:, :, 0] == 1.0)
        assert np.all(x.tensor[:, :, 1] == 2.0)

    def test_scale_counterscale_invariance(self):
        rng = np.random.default_rng(0)
        s = rng.uniform(0, 1, (4, 5))
        c = rng.uniform(0, 1, 6)
        x1 = rq.compose([s], [c])
        x2 = rq.compose([3.0 * s], [c / 3.0])
        np.testing.assert_allclose(x1.tensor, x2.tensor, rtol=1e-12)

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(42)
        slfs = [rng.uniform(0, 1, (3, 4)) for _ in range(2)]
        psds = [rng.uniform(0, 1, 5) for _ in range(2)]
        x = rq.compose(slfs, psds)
        expect = np.zeros((3, 4, 5))
        for i in range(3):
            for j in range(4):
                for k in range(5):
                    expect[i, j, k] = sum(slfs[r][i, j] * psds[r][k] for r in range(2))
        np.testing.assert_allclose(x.tensor, expect, rtol=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            rq.compose([np.ones((2, 2))], [np.ones(3), np.ones(3)])

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_bilinear_in_psd(self, seed):
        rng = np.random.default_rng(seed)
        s = [rng.uniform(0, 1, (3, 3))]
        c1, c2 = rng.uniform(0, 1, 4), rng.uniform(0, 1, 4)
        lhs = rq.compose(s, [c1 + c2]).tensor
        rhs = rq.compose(s, [c1]).tensor + rq.compose(s, [c2]).tensor
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-15)

    def test_nonnegativity_closure(self):
        rng = np.random.default_rng(3)
        x = rq.compose([rng.uniform(0, 1, (6, 6)) for _ in range(3)], [rng.uniform(0, 1, 8) for _ in range(3)])
        assert np.all(x.tensor >= 0)


class TestSampling:
    def test_exhaustive_without_replacement_covers_grid(self):
        ss = rq.sample_fibers(5, 6, 30, "without", seed=0)
        assert len(ss) == 30
        assert len({(i, j) for i, j in ss.locations}) == 30

    def test_empty_sample(self):
        ss = rq.sample_fibers(5, 5, 0, "without", seed=0)
        assert len(ss) == 0

    def test_ten_percent_profile(self):
        ss = rq.sample_fibers(51, 51, 260, "without", seed=0)
        assert len(ss) == 260
        assert ss.locations.min() >= 0
        assert ss.locations[:, 0].max() < 51 and ss.locations[:, 1].max() < 51

    def test_oversampling_without_replacement_rejected(self):
        with pytest.raises(ValueError):
            rq.sample_fibers(4, 4, 17, "without", seed=0)

    def test_with_replacement_allows_duplicates(self):
        ss = rq.sample_fibers(2, 2, 40, "with", seed=1)
        assert len(ss) == 40


class TestScenario:
    def scenario(self, **kw):
        base = dict(
            I=12, J=12, K=8, R=2,
            emitters=(rq.Emitter(3, 3, 2.0), rq.Emitter(9, 8, 2.2)),
            xc=30.0, eta=5.0, n_subbands=2, beta=20.0, kappa=2.0, seed=5,
            psd_floor=1e-3,
        )
        base.update(kw)
        return rq.Scenario(**base)

    def test_roundtrip_through_json(self, tmp_path):
        scen = self.scenario()
        rq.save_scenario(tmp_path / "s.json", scen)
        assert rq.load_scenario(tmp_path / "s.json") == scen

    def test_generation_respects_bounds(self):
        scen = self.scenario()
        radio_map, slfs, psds = rq.generate_scene(scen)
        assert all(s.frobenius() <= scen.beta for s in slfs)
        assert all(p.norm() <= scen.kappa + 1e-12 for p in psds)
        # composed max-norm bound from the factor norms
        assert radio_map.tensor.max() <= scen.R * scen.beta * scen.kappa + 1e-9

    def test_generation_deterministic(self):
        scen = self.scenario()
        a, _, _ = rq.generate_scene(scen)
        b, _, _ = rq.generate_scene(scen)
        assert np.array_equal(a.tensor, b.tensor)

    def test_emitter_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            self.scenario(R=3)


class TestBlobFormat:
    def test_roundtrip(self, tmp_path):
        t = np.random.default_rng(0).uniform(0, 1, (4, 5, 6))
        save_map_blob(tmp_path / "x.qmap", t)
        np.testing.assert_array_equal(load_map_blob(tmp_path / "x.qmap"), t)

    def test_header_layout(self, tmp_path):
        t = np.arange(24, dtype=float).reshape(2, 3, 4)
        save_map_blob(tmp_path / "x.qmap", t)
        raw = (tmp_path / "x.qmap").read_bytes()
        assert raw[:4] == b"QMAP"
        assert np.frombuffer(raw[4:16], dtype="<u4").tolist() == [2, 3, 4]
        assert np.frombuffer(raw[16:], dtype="<f8")[1] == 1.0  # row-major: (0,0,1)

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "bad.qmap").write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(ValueError):
            load_map_blob(tmp_path / "bad.qmap")
