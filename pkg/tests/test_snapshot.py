import hashlib
import struct

import numpy as np
import pytest

from stsense.exceptions import (
    DataError,
    DimensionMismatchError,
    IndexOutOfRangeError,
    MalformedHeaderError,
    NonFiniteValueError,
)
from stsense.snapshot import (
    SnapshotMatrix,
    SpatialProjection,
    TimeGrid,
    apply_projection,
    decode_array,
    encode_array,
    load_snapshots,
    save_snapshots,
)
from stsense.synth import default_preset, generate


def mat_from(values, **kw):
    values = np.asarray(values, dtype=float)
    return SnapshotMatrix(values, TimeGrid(0.0, 0.5, values.shape[1]), **kw)


class TestTimeGrid:
    def test_times_are_uniform_from_t0(self):
        g = TimeGrid(2.0, 0.25, 4)
        np.testing.assert_array_equal(g.times, [2.0, 2.25, 2.5, 2.75])
        assert g.duration == 1.0

    @pytest.mark.parametrize("dt,m", [(0.0, 4), (-1.0, 4), (0.1, 1)])
    def test_rejects_bad_grids(self, dt, m):
        with pytest.raises(DataError):
            TimeGrid(0.0, dt, m)


class TestSnapshotMatrix:
    def test_defaults_and_read_only(self):
        m = mat_from(np.ones((3, 4)))
        np.testing.assert_array_equal(m.space_ids, [1, 2, 3])
        assert m.n_full == 3
        with pytest.raises(ValueError):
            m.values[0, 0] = 5.0

    def test_rejects_column_count_mismatch(self):
        with pytest.raises(DataError):
            SnapshotMatrix(np.ones((2, 3)), TimeGrid(0, 1, 4))

    def test_rejects_non_finite(self):
        v = np.ones((2, 3))
        v[1, 2] = np.inf
        with pytest.raises(NonFiniteValueError):
            mat_from(v)

    def test_rejects_unsorted_ids(self):
        with pytest.raises(DataError):
            mat_from(np.ones((2, 3)), space_ids=[3, 1], n_full=5)

    def test_rejects_ids_beyond_grid(self):
        with pytest.raises(IndexOutOfRangeError):
            mat_from(np.ones((2, 3)), space_ids=[1, 9], n_full=5)

    def test_empty_rows_rejected(self):
        with pytest.raises(DataError):
            SnapshotMatrix(np.zeros((0, 2)), TimeGrid(0, 1, 2))


class TestProjection:
    def test_three_of_ten(self):
        full = mat_from(np.arange(50.0).reshape(10, 5), regime_label="x")
        out = apply_projection(SpatialProjection(10, [1, 4, 7]), full)
        assert out.shape == (3, 5)
        np.testing.assert_array_equal(out.values, full.values[[0, 3, 6]])
        np.testing.assert_array_equal(out.space_ids, [1, 4, 7])
        assert out.grid == full.grid and out.regime_label == "x"

    def test_identity_projection(self):
        full = mat_from(np.random.default_rng(0).normal(size=(6, 4)))
        out = apply_projection(SpatialProjection(6, range(1, 7)), full)
        np.testing.assert_array_equal(out.values, full.values)

    def test_row_valued_by_index(self):
        full = mat_from(np.repeat(np.arange(1.0, 11.0)[:, None], 5, axis=1))
        out = apply_projection(SpatialProjection(10, [2]), full)
        np.testing.assert_array_equal(out.values, np.full((1, 5), 2.0))

    def test_out_of_range_names_the_index(self):
        with pytest.raises(IndexOutOfRangeError) as err:
            SpatialProjection(10, [3, 11])
        assert err.value.index == 11 and "11" in str(err.value)

    def test_missing_row_in_subset_matrix(self):
        sub = mat_from(np.ones((2, 3)), space_ids=[2, 5], n_full=8)
        with pytest.raises(IndexOutOfRangeError):
            apply_projection(SpatialProjection(8, [3]), sub)

    def test_idempotent_on_same_indices(self):
        full = mat_from(np.random.default_rng(1).normal(size=(9, 3)))
        proj = SpatialProjection(9, [8, 2, 5])
        once = apply_projection(proj, full)
        twice = apply_projection(proj, once)
        np.testing.assert_array_equal(once.values, twice.values)
        np.testing.assert_array_equal(once.space_ids, [2, 5, 8])

    def test_matrix_form_agrees(self):
        full = mat_from(np.random.default_rng(2).normal(size=(7, 4)))
        proj = SpatialProjection(7, [1, 6])
        np.testing.assert_array_equal(proj.matrix() @ full.values, apply_projection(proj, full).values)

    def test_duplicates_rejected(self):
        with pytest.raises(DataError):
            SpatialProjection(5, [2, 2])


class TestFileFormat:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        vals = rng.normal(size=(8, 16)) * 10.0 ** rng.integers(-300, 300, size=(8, 16))
        m = SnapshotMatrix(vals, TimeGrid(-1.5, 0.125, 16), space_ids=np.arange(2, 18, 2), regime_label="ν=150", n_full=20)
        save_snapshots(m, tmp_path / "a.spsn")
        back = load_snapshots(tmp_path / "a.spsn")
        assert back.values.tobytes() == m.values.tobytes()
        np.testing.assert_array_equal(back.space_ids, m.space_ids)
        assert back.grid == m.grid and back.n_full == 20 and back.regime_label == "ν=150"

    def test_minimal_matrix(self, tmp_path):
        m = mat_from([[1.0, -2.0]])
        save_snapshots(m, tmp_path / "min.spsn")
        assert load_snapshots(tmp_path / "min.spsn").values.tolist() == [[1.0, -2.0]]

    def test_layout(self):
        buf = encode_array(np.array([[1.0, 2.0], [3.0, 4.0]]), [1, 2], 2, 0.5, 0.25)
        assert buf[:4] == b"SPSN"
        assert struct.unpack_from("<IIII", buf, 4) == (1, 2, 2, 2)
        assert struct.unpack_from("<dd", buf, 20) == (0.5, 0.25)
        # column-major values after the ids
        assert struct.unpack_from("<4d", buf, 36 + 8) == (1.0, 3.0, 2.0, 4.0)

    def test_column_count_mismatch(self, tmp_path):
        buf = bytearray(encode_array(np.ones((3, 4)), [1, 2, 3], 3))
        struct.pack_into("<I", buf, 12, 5)  # header claims 5 columns
        (tmp_path / "bad.spsn").write_bytes(bytes(buf))
        with pytest.raises(DimensionMismatchError):
            load_snapshots(tmp_path / "bad.spsn")
        struct.pack_into("<I", buf, 12, 3)  # now fewer than stored
        (tmp_path / "bad.spsn").write_bytes(bytes(buf))
        with pytest.raises(DimensionMismatchError):
            load_snapshots(tmp_path / "bad.spsn")

    def test_nan_cell(self, tmp_path):
        v = np.ones((2, 3))
        v[0, 1] = np.nan
        (tmp_path / "nan.spsn").write_bytes(encode_array(v, [1, 2], 2))
        with pytest.raises(NonFiniteValueError):
            load_snapshots(tmp_path / "nan.spsn")

    @pytest.mark.parametrize("patch", [(0, b"XXXX"), (4, struct.pack("<I", 7))])
    def test_bad_header(self, tmp_path, patch):
        buf = bytearray(encode_array(np.ones((1, 2)), [1], 1))
        off, data = patch
        buf[off:off + len(data)] = data
        (tmp_path / "h.spsn").write_bytes(bytes(buf))
        with pytest.raises(MalformedHeaderError):
            load_snapshots(tmp_path / "h.spsn")

    def test_truncated_header(self):
        with pytest.raises(MalformedHeaderError):
            decode_array(b"SPSN\x01")

    def test_non_positive_dt_in_file(self, tmp_path):
        (tmp_path / "d.spsn").write_bytes(encode_array(np.ones((1, 3)), [1], 1, dt=0.0))
        with pytest.raises(MalformedHeaderError):
            load_snapshots(tmp_path / "d.spsn")

    def test_synthetic_file_checksum_is_stable(self, tmp_path):
        spec = default_preset()[3]
        digests = []
        for i in range(2):
            save_snapshots(generate(spec), tmp_path / f"s{i}.spsn")
            digests.append(hashlib.sha256((tmp_path / f"s{i}.spsn").read_bytes()).hexdigest())
        assert digests[0] == digests[1]
        assert load_snapshots(tmp_path / "s0.spsn").shape == (64, 400)
