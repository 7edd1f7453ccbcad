import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtri

from voxsynth.rng import spawn
from voxsynth.tabular import Column, Schema, Table
from voxsynth.transforms import (
    SIGMA_FLOOR,
    CopulaModel,
    TableCodec,
    copula_map,
    fit_vgm,
    norm_quantile,
    transform_table,
    vgm_decode,
    vgm_encode,
)


class TestNormQuantile:
    def test_against_scipy_oracle(self):
        p = np.concatenate([
            np.linspace(1e-9, 0.02, 50),
            np.linspace(0.021, 0.979, 200),
            np.linspace(0.98, 1 - 1e-9, 50),
        ])
        ours = norm_quantile(p)
        ref = ndtri(p)
        assert np.max(np.abs(ours - ref)) < 1e-9

    def test_symmetry_and_scalars(self):
        assert norm_quantile(0.5) == pytest.approx(0.0, abs=1e-12)
        assert norm_quantile(0.975) == pytest.approx(1.959964, abs=1e-5)
        assert norm_quantile(0.2) == pytest.approx(-norm_quantile(0.8), abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            norm_quantile(0.0)
        with pytest.raises(ValueError):
            norm_quantile(1.0)


class TestFitVgm:
    def test_constant_column_single_floor_mode(self):
        model = fit_vgm([5.0] * 20, max_modes=4, seed=0)
        assert model.n_modes == 1
        assert model.weights[0] == 1.0
        assert model.means[0] == 5.0
        assert model.stds[0] == SIGMA_FLOOR

    def test_two_well_separated_modes_recovered(self):
        # Oracle: the generating parameters of the sampled mixture.
        rng = spawn(42, "mixdata")
        comp = rng.random(1000) < 0.5
        x = np.where(comp, rng.normal(0.0, 1.0, 1000), rng.normal(10.0, 1.0, 1000))
        model = fit_vgm(x, max_modes=10, seed=7)
        assert model.n_modes == 2
        assert abs(model.means[0] - 0.0) < 0.3
        assert abs(model.means[1] - 10.0) < 0.3
        assert abs(model.weights.sum() - 1.0) <= 1e-9

    def test_single_component_is_em_fixed_point(self):
        x = np.array([1.0, 2.0, 4.0, 7.0])
        model = fit_vgm(x, max_modes=1, seed=0)
        assert model.means[0] == pytest.approx(np.mean(x), abs=1e-12)
        assert model.stds[0] == pytest.approx(np.std(x), abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_invariants_on_noisy_columns(self, seed, corpus):
        name = corpus.schema.continuous_features[seed * 5 % 22]
        model = fit_vgm(corpus.column(name), max_modes=10, seed=seed)
        assert abs(model.weights.sum() - 1.0) <= 1e-9
        assert np.all(model.stds >= SIGMA_FLOOR)
        assert np.all(np.diff(model.means) >= 0.0)
        assert np.all(model.weights >= 0.005 / 2)  # pruned then renormalized

    def test_deterministic(self, corpus):
        x = corpus.column("ppe")
        a = fit_vgm(x, max_modes=10, seed=3)
        b = fit_vgm(x, max_modes=10, seed=3)
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.stds, b.stds)


class TestVgmEncodeDecode:
    def setup_method(self):
        self.model = fit_vgm([1.0, 1.1, 0.9, 5.0, 5.1, 4.9] * 10, max_modes=4, seed=0)

    def test_centered_value_gives_zero_alpha(self):
        single = fit_vgm([2.0, 2.5, 3.0], max_modes=1, seed=0)
        alpha, mode = vgm_encode(single, float(single.means[0]), seed=0)
        assert mode == 0
        assert alpha == 0.0

    def test_boundary_alpha(self):
        single = fit_vgm([2.0, 2.5, 3.0], max_modes=1, seed=0)
        v = float(single.means[0] + 4.0 * single.stds[0])
        alpha, _ = vgm_encode(single, v, seed=0)
        assert alpha == pytest.approx(1.0, abs=1e-12)

    def test_single_mode_model_always_mode_zero(self):
        single = fit_vgm([2.0, 2.5, 3.0], max_modes=1, seed=0)
        _, modes = vgm_encode(single, np.linspace(-10, 10, 50), seed=9)
        assert np.all(modes == 0)

    def test_decode_formula(self):
        m = self.model
        assert vgm_decode(m, 0.0, 1) == m.means[1]
        assert vgm_decode(m, -1.0, 0) == pytest.approx(m.means[0] - 4 * m.stds[0], rel=1e-12)

    def test_round_trip_within_four_sigma(self):
        rng = spawn(5, "probe")
        values = np.concatenate([rng.normal(1.0, 0.1, 50), rng.normal(5.0, 0.1, 50)])
        alpha, modes = vgm_encode(self.model, values, seed=11)
        back = vgm_decode(self.model, alpha, modes)
        assert np.allclose(back, values, rtol=1e-12, atol=1e-12)

    def test_mode_out_of_range(self):
        with pytest.raises(IndexError):
            vgm_decode(self.model, 0.0, self.model.n_modes)


class TestCopula:
    def test_median_maps_near_zero(self):
        rng = spawn(1, "copula")
        x = rng.gamma(2.0, 3.0, 401)
        model = CopulaModel.fit(x)
        z = copula_map(model, float(np.median(x)), "to_gaussian")
        assert abs(z) < 0.05

    def test_inverse_pair_on_sample_points(self):
        rng = spawn(2, "copula")
        x = np.round(rng.normal(0, 2, 150), 2)  # rounding forces ties
        model = CopulaModel.fit(x)
        z = model.to_gaussian(x)
        back = model.from_gaussian(z)
        assert np.max(np.abs(back - x)) <= 1e-9

    def test_monotone(self):
        rng = spawn(3, "copula")
        x = rng.normal(0, 1, 200)
        model = CopulaModel.fit(x)
        probe = np.linspace(x.min() - 1, x.max() + 1, 500)
        z = model.to_gaussian(probe)
        assert np.all(np.diff(z) >= 0.0)

    def test_clip_bound_is_half_over_n(self):
        x = np.arange(100, dtype=float)
        model = CopulaModel.fit(x)
        assert model.eps == 1.0 / 200.0
        # out-of-support values map to the clipped tail quantiles
        lo = model.to_gaussian(-1e9)
        hi = model.to_gaussian(1e9)
        assert lo == pytest.approx(norm_quantile(model.eps), abs=1e-12)
        assert hi == pytest.approx(norm_quantile(1 - model.eps), abs=1e-12)


def _toy_table():
    schema = Schema(
        (Column("a", "continuous"), Column("b", "continuous"),
         Column("status", "discrete", categories=(0, 1))),
        target_column="status",
    )
    rng = spawn(17, "codec-toy")
    n = 60
    a = np.concatenate([rng.normal(0, 1, n // 2), rng.normal(8, 0.5, n // 2)])
    b = rng.normal(-3, 2, n)
    status = np.asarray(rng.integers(0, 2, n)).astype(object)
    return Table(schema, {"a": a, "b": b, "status": status})


class TestTableCodec:
    def test_round_trip(self):
        t = _toy_table()
        codec = TableCodec.fit(t, max_modes=6, seed=0)
        enc = transform_table(codec, t, "encode", seed=4)
        assert enc.shape == (t.n_rows, codec.width)
        back = transform_table(codec, enc, "decode")
        for name in ("a", "b"):
            assert np.allclose(back.column(name), t.column(name), atol=1e-9)
        assert back.column("status").tolist() == t.column("status").tolist()

    def test_one_hot_blocks_are_unit_vectors(self):
        t = _toy_table()
        codec = TableCodec.fit(t, max_modes=6, seed=0)
        enc = codec.encode(t, seed=4)
        pos = 0
        for cc in codec.columns:
            block = enc[:, pos:pos + cc.width]
            if cc.kind == "continuous":
                onehot = block[:, 1:]
            else:
                assert cc.width == 2
                onehot = block
            assert np.all(np.isin(onehot, (0.0, 1.0)))
            assert np.all(onehot.sum(axis=1) == 1.0)
            pos += cc.width

    def test_copula_composition_round_trip(self):
        t = _toy_table()
        codec = TableCodec.fit(t, max_modes=6, seed=0, use_copula=True)
        enc = codec.encode(t, seed=4)
        back = codec.decode(enc)
        for name in ("a", "b"):
            assert np.allclose(back.column(name), t.column(name), atol=1e-9)

    def test_empty_table_keeps_width(self):
        t = _toy_table()
        codec = TableCodec.fit(t, max_modes=6, seed=0)
        empty = t.select_rows(np.empty(0, dtype=np.intp))
        enc = codec.encode(empty, seed=0)
        assert enc.shape == (0, codec.width)

    def test_schema_mismatch(self):
        t = _toy_table()
        codec = TableCodec.fit(t, max_modes=6, seed=0)
        other = Schema(
            (Column("a", "continuous"), Column("status", "discrete", categories=(0, 1))),
            target_column="status",
        )
        t2 = Table(other, {"a": np.zeros(3), "status": np.asarray([0, 1, 0]).astype(object)})
        with pytest.raises(Exception) as err:
            codec.encode(t2, seed=0)
        assert "codec" in str(err.value) or "column" in str(err.value)

    def test_serialization_round_trip(self):
        t = _toy_table()
        codec = TableCodec.fit(t, max_modes=6, seed=0, use_copula=True)
        clone = TableCodec.from_dict(codec.to_dict())
        enc_a = codec.encode(t, seed=4)
        enc_b = clone.encode(t, seed=4)
        assert np.array_equal(enc_a, enc_b)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=40),
    centers=st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=3),
    scale=st.floats(min_value=0.01, max_value=5.0),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_property_round_trip_random_tables(n, centers, scale, seed):
    """Encode/decode must invert on clustered continuous data of any shape."""
    rng = spawn(seed, "hyp")
    which = rng.integers(0, len(centers), n)
    a = np.asarray(centers)[which] + rng.normal(0, scale, n)
    status = np.asarray(rng.integers(0, 2, n)).astype(object)
    schema = Schema(
        (Column("a", "continuous"), Column("status", "discrete", categories=(0, 1))),
        target_column="status",
    )
    t = Table(schema, {"a": a, "status": status})
    codec = TableCodec.fit(t, max_modes=5, seed=seed)
    back = codec.decode(codec.encode(t, seed=seed))
    assert np.allclose(back.column("a"), t.column("a"), atol=1e-9)
    assert back.column("status").tolist() == t.column("status").tolist()
