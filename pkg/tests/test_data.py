import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synther import data
from synther.errors import FormatError, InvalidInputError, UnavailableDataError


def make_dataset(n=50, state_dim=3, action_dim=2, seed=0, has_terminal=True):
    schema = data.TransitionSchema(state_dim, action_dim, has_terminal)
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(n, schema.row_dim)).astype(np.float32)
    if has_terminal:
        rows[:, -1] = (rows[:, -1] > 0.8).astype(np.float32)
    return data.TransitionDataset(schema, rows)


class TestSchema:
    def test_row_dim_layout(self):
        s = data.TransitionSchema(3, 2, True)
        assert s.row_dim == 3 + 2 + 1 + 3 + 1
        assert s.reward_index == 5
        assert s.next_state_slice == slice(6, 9)
        assert s.terminal_index == 9

    def test_no_terminal(self):
        s = data.TransitionSchema(3, 2, False)
        assert s.row_dim == 9
        assert s.terminal_index is None

    def test_bad_dims(self):
        with pytest.raises(InvalidInputError):
            data.TransitionSchema(0, 2)

    def test_immutable(self):
        s = data.TransitionSchema(3, 2)
        with pytest.raises(Exception):
            s.state_dim = 4


class TestDataset:
    def test_rejects_nonbinary_terminal(self):
        s = data.TransitionSchema(1, 1, True)
        rows = np.zeros((2, s.row_dim), dtype=np.float32)
        rows[0, -1] = 0.5
        with pytest.raises(InvalidInputError):
            data.TransitionDataset(s, rows)

    def test_rejects_nonfinite(self):
        s = data.TransitionSchema(1, 1, False)
        rows = np.zeros((2, s.row_dim), dtype=np.float32)
        rows[0, 0] = np.nan
        with pytest.raises(InvalidInputError):
            data.TransitionDataset(s, rows)

    def test_rows_readonly(self):
        ds = make_dataset()
        with pytest.raises(ValueError):
            ds.rows[0, 0] = 1.0


class TestNormalizer:
    def test_constant_dim_guard(self):
        s = data.TransitionSchema(1, 1, False)
        rows = np.tile([3.0, 1.0, 2.0, 5.0], (10, 1)).astype(np.float32)
        rows[:, 1] = np.arange(10)
        nrm = data.fit_normalizer(data.TransitionDataset(s, rows))
        assert nrm.mean[0] == 3.0
        assert nrm.std[0] == 1.0

    def test_terminal_identity(self):
        ds = make_dataset(n=200)
        nrm = data.fit_normalizer(ds)
        assert nrm.mean[-1] == 0.0 and nrm.std[-1] == 1.0
        normed = data.normalize(ds, nrm)
        np.testing.assert_array_equal(normed.rows[:, -1], ds.rows[:, -1])
        back = data.denormalize(normed.rows, nrm)
        np.testing.assert_array_equal(back[:, -1], ds.rows[:, -1])

    def test_population_convention(self):
        # values {0, 2}: mean 1, population std 1 (sample std would be ~1.414)
        s = data.TransitionSchema(1, 1, False)
        rows = np.array([[0.0, 0, 0, 0], [2.0, 0, 0, 0]], dtype=np.float32)
        nrm = data.fit_normalizer(data.TransitionDataset(s, rows))
        assert nrm.mean[0] == pytest.approx(1.0)
        assert nrm.std[0] == pytest.approx(1.0)

    def test_singleton_rejected(self):
        s = data.TransitionSchema(1, 1, False)
        ds = data.TransitionDataset(s, np.zeros((1, 4), dtype=np.float32))
        with pytest.raises(InvalidInputError):
            data.fit_normalizer(ds)

    def test_roundtrip_and_standardization(self):
        ds = make_dataset(n=500, seed=3)
        nrm = data.fit_normalizer(ds)
        normed = data.normalize(ds, nrm)
        back = data.denormalize(normed.rows.astype(np.float64), nrm)
        assert np.max(np.abs(back - ds.rows)) < 1e-5
        cont = ~ds.schema.terminal_mask()
        means = normed.rows[:, cont].astype(np.float64).mean(axis=0)
        stds = normed.rows[:, cont].astype(np.float64).std(axis=0)
        assert np.max(np.abs(means)) < 1e-6
        np.testing.assert_allclose(stds, 1.0, atol=1e-4)

    def test_shape_mismatch(self):
        ds = make_dataset()
        nrm = data.fit_normalizer(ds)
        with pytest.raises(InvalidInputError):
            nrm.apply(np.zeros((3, ds.schema.row_dim + 1)))

    @given(st.integers(min_value=2, max_value=60), st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_property(self, n, seed):
        ds = make_dataset(n=n, seed=seed)
        nrm = data.fit_normalizer(ds)
        back = nrm.invert(nrm.apply(ds.rows.astype(np.float64)))
        assert np.max(np.abs(back - ds.rows)) < 1e-5


class TestThreshold:
    def test_rounding(self):
        s = data.TransitionSchema(1, 1, True)
        rows = np.array([[0.0, 0, 0, 0, 0.7], [0, 0, 0, 0, 0.3], [0, 0, 0, 0, 0.5]])
        out = data.threshold_terminals(rows, s)
        np.testing.assert_array_equal(out[:, -1], [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(out[:, :-1], rows[:, :-1])

    def test_idempotent_on_binary(self):
        ds = make_dataset()
        out = data.threshold_terminals(ds.rows, ds.schema)
        np.testing.assert_array_equal(out, ds.rows)

    def test_requires_terminal(self):
        s = data.TransitionSchema(1, 1, False)
        with pytest.raises(InvalidInputError):
            data.threshold_terminals(np.zeros((1, 4)), s)


class TestSubsample:
    def test_full_fraction_is_permutation(self):
        ds = make_dataset(n=40)
        out = data.subsample(ds, 1.0, seed=1)
        assert out.count == ds.count
        a = sorted(r.tobytes() for r in ds.rows)
        b = sorted(r.tobytes() for r in out.rows)
        assert a == b

    def test_sizes(self):
        ds = make_dataset(n=1000)
        assert data.subsample(ds, 0.15, seed=0).count == 150
        assert data.subsample(ds, 0.03, seed=0).count == 30

    def test_deterministic_and_duplicate_free(self):
        ds = make_dataset(n=300, seed=2)
        a = data.subsample(ds, 0.5, seed=9)
        b = data.subsample(ds, 0.5, seed=9)
        np.testing.assert_array_equal(a.rows, b.rows)
        keys = [r.tobytes() for r in a.rows]
        assert len(set(keys)) == len(keys)

    def test_bad_fraction(self):
        ds = make_dataset()
        for frac in (0.0, -0.5, 1.5):
            with pytest.raises(InvalidInputError):
                data.subsample(ds, frac, seed=0)


class TestReplayBuffer:
    def test_eviction_order(self):
        buf = data.ReplayBuffer(row_dim=1, capacity=5)
        buf.push(np.arange(8, dtype=np.float32).reshape(-1, 1))
        assert len(buf) == 5
        np.testing.assert_array_equal(buf.data().ravel(), [3, 4, 5, 6, 7])

    def test_incremental_wrap(self):
        buf = data.ReplayBuffer(row_dim=1, capacity=3)
        for i in range(7):
            buf.push(np.array([[float(i)]]))
        np.testing.assert_array_equal(buf.data().ravel(), [4, 5, 6])

    def test_oversized_push(self):
        buf = data.ReplayBuffer(row_dim=1, capacity=3)
        buf.push(np.arange(10, dtype=np.float32).reshape(-1, 1))
        np.testing.assert_array_equal(buf.data().ravel(), [7, 8, 9])

    def test_sample_empty(self):
        buf = data.ReplayBuffer(row_dim=1, capacity=3)
        with pytest.raises(UnavailableDataError):
            buf.sample(1, np.random.default_rng(0))


class TestMixedSample:
    def _pair(self, ratio):
        real = data.ReplayBuffer(2, 100)
        syn = data.ReplayBuffer(2, 100)
        real.push(np.ones((50, 2), dtype=np.float32))
        syn.push(-np.ones((50, 2), dtype=np.float32))
        return data.ReplayPair(real=real, synthetic=syn, ratio=ratio)

    @pytest.mark.parametrize("ratio,batch", [(0.0, 64), (0.25, 64), (0.5, 256), (1.0, 64)])
    def test_exact_composition(self, ratio, batch):
        pair = self._pair(ratio)
        out = data.mixed_sample(pair, batch, seed_or_rng=0)
        n_real = int((out[:, 0] > 0).sum())
        assert n_real == round(ratio * batch)
        assert out.shape == (batch, 2)

    def test_empty_required_buffer(self):
        real = data.ReplayBuffer(2, 10)
        syn = data.ReplayBuffer(2, 10)
        real.push(np.ones((5, 2), dtype=np.float32))
        pair = data.ReplayPair(real=real, synthetic=syn, ratio=0.5)
        with pytest.raises(UnavailableDataError):
            data.mixed_sample(pair, 8, seed_or_rng=0)

    def test_bad_ratio(self):
        with pytest.raises(InvalidInputError):
            data.ReplayPair(
                real=data.ReplayBuffer(1, 1), synthetic=data.ReplayBuffer(1, 1), ratio=1.5
            )


class TestFileFormats:
    def test_binary_roundtrip_bit_exact(self, tmp_path):
        ds = make_dataset(n=77, seed=5)
        p = tmp_path / "d.bin"
        data.save_dataset(ds, p)
        back = data.load_dataset(p)
        assert back.schema == ds.schema
        assert back.rows.tobytes() == ds.rows.tobytes()

    def test_header_count(self, tmp_path):
        ds = make_dataset(n=13)
        p = tmp_path / "d.bin"
        data.save_dataset(ds, p)
        import struct

        blob = p.read_bytes()
        count = struct.unpack_from("<Q", blob, len(data.MAGIC_DATASET) + 9)[0]
        assert count == 13

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "d.bin"
        p.write_bytes(b"NOTMAGIC" + b"\0" * 32)
        with pytest.raises(FormatError):
            data.load_dataset(p)

    def test_truncated(self, tmp_path):
        ds = make_dataset(n=10)
        p = tmp_path / "d.bin"
        data.save_dataset(ds, p)
        p.write_bytes(p.read_bytes()[:-7])
        with pytest.raises(FormatError):
            data.load_dataset(p)

    def test_csv_roundtrip(self, tmp_path):
        ds = make_dataset(n=20, state_dim=2, action_dim=1, seed=7)
        p = tmp_path / "d.csv"
        data.export_csv(ds, p)
        header = p.read_text().splitlines()[0]
        assert header == "s0,s1,a0,r,ns0,ns1,d"
        back = data.import_csv(p)
        assert back.schema == ds.schema
        np.testing.assert_array_equal(back.rows, ds.rows)

    def test_csv_bad_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x,y,z\n1,2,3\n")
        with pytest.raises(FormatError):
            data.import_csv(p)
