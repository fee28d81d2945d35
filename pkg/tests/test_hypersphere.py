import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sphererec import hypersphere as hs

finite_rows = hnp.arrays(
    np.float64,
    st.tuples(st.integers(2, 8), st.integers(2, 5)),
    elements=st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3),
)


class TestInitXavier:
    def test_bound_for_dim_64(self):
        table = hs.init_xavier(100, 64, seed=0)
        bound = np.sqrt(6.0 / 128.0)
        assert bound == pytest.approx(0.2165, abs=1e-4)
        assert np.all(np.abs(table.values) <= bound)

    def test_deterministic(self):
        a = hs.init_xavier(50, 16, seed=9)
        b = hs.init_xavier(50, 16, seed=9)
        np.testing.assert_array_equal(a.values, b.values)

    def test_sample_mean_near_zero(self):
        rows, dim = 500, 64
        table = hs.init_xavier(rows, dim, seed=1)
        bound = np.sqrt(6.0 / (2 * dim))
        # uniform on [-a, a]: var = a^2 / 3, so the mean estimator has
        # sigma = a / sqrt(3 N)
        sigma = bound / np.sqrt(3 * rows * dim)
        assert abs(table.values.mean()) <= 3 * sigma

    def test_invalid_shapes(self):
        with pytest.raises(ValueError):
            hs.init_xavier(0, 8, seed=0)
        with pytest.raises(ValueError):
            hs.init_xavier(4, 1, seed=0)


class TestL2Normalize:
    def test_three_four_five(self):
        out = hs.l2_normalize(np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(out, [[0.6, 0.8]])

    def test_unit_row_unchanged(self):
        row = np.array([[1.0, 0.0, 0.0]])
        np.testing.assert_allclose(hs.l2_normalize(row), row)

    def test_zero_row_error_names_row(self):
        vectors = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="row 1"):
            hs.l2_normalize(vectors)

    @given(finite_rows)
    @settings(max_examples=50, deadline=None)
    def test_idempotent_and_unit(self, rows):
        once = hs.l2_normalize(rows)
        twice = hs.l2_normalize(once)
        np.testing.assert_allclose(np.linalg.norm(once, axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(twice, once, atol=1e-12)


class TestPairwiseSqDists:
    def test_antipodal(self):
        pts = np.array([[1.0, 0.0], [-1.0, 0.0]])
        np.testing.assert_allclose(hs.pairwise_sq_dists(pts), [4.0])

    def test_identical_rows(self):
        pts = np.array([[0.6, 0.8], [0.6, 0.8]])
        np.testing.assert_allclose(hs.pairwise_sq_dists(pts), [0.0], atol=1e-15)

    def test_orthogonal(self):
        pts = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(hs.pairwise_sq_dists(pts), [2.0])

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            hs.pairwise_sq_dists(np.array([[1.0, 0.0]]))

    @given(finite_rows)
    @settings(max_examples=50, deadline=None)
    def test_matches_dot_product_form_and_range(self, rows):
        unit = hs.l2_normalize(rows)
        dists = hs.pairwise_sq_dists(unit)
        b = unit.shape[0]
        assert dists.shape == (b * (b - 1) // 2,)
        assert np.all(dists >= -1e-12) and np.all(dists <= 4.0 + 1e-12)
        gram = unit @ unit.T
        expected = np.array([
            2.0 - 2.0 * gram[j, k] for j in range(b) for k in range(j + 1, b)
        ])
        np.testing.assert_allclose(dists, expected, atol=1e-10)


class TestBatchMean:
    def test_two_rows(self):
        out = hs.batch_mean(np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_single_row_identity(self):
        row = np.array([[0.3, -0.7]])
        np.testing.assert_allclose(hs.batch_mean(row), row[0])

    def test_antipodal_rows_cancel(self):
        pts = np.array([[0.6, 0.8], [-0.6, -0.8]])
        np.testing.assert_allclose(hs.batch_mean(pts), [0.0, 0.0], atol=1e-15)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            hs.batch_mean(np.empty((0, 3)))


class TestCheckpointIO:
    def test_roundtrip_is_float32_exact(self, tmp_path):
        table = hs.init_xavier(7, 4, seed=2)
        hs.save_embedding_table(tmp_path / "t.emb", table, "user")
        loaded, role = hs.load_embedding_table(tmp_path / "t.emb")
        assert role == "user"
        assert (loaded.rows, loaded.dim) == (7, 4)
        np.testing.assert_array_equal(loaded.values, table.values.astype(np.float32).astype(np.float64))

    def test_checkpoint_pair_with_sidecar(self, tmp_path):
        user = hs.init_xavier(3, 4, seed=0)
        item = hs.init_xavier(5, 4, seed=1)
        config = {"objective": "rau", "lr": 1e-3}
        hs.save_checkpoint(tmp_path, user, item, seed=42, config=config)
        u, i, sidecar = hs.load_checkpoint(tmp_path)
        assert (u.rows, i.rows) == (3, 5)
        assert sidecar["seed"] == 42
        assert sidecar["config_hash"] == hs.config_hash(config)
        assert sidecar["config"] == config

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNK")
        with pytest.raises(ValueError, match="magic"):
            hs.load_embedding_table(path)

    def test_truncated_rejected(self, tmp_path):
        table = hs.init_xavier(4, 4, seed=0)
        path = tmp_path / "t.emb"
        hs.save_embedding_table(path, table, "item")
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(ValueError, match="bytes"):
            hs.load_embedding_table(path)

    def test_bad_role_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="role"):
            hs.save_embedding_table(tmp_path / "t.emb", hs.init_xavier(2, 2, 0), "query")
