import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdcast import density
from crowdcast.density import (
    AnnotationRecord,
    AnnotationStream,
    DensitySequence,
    rasterize,
    read_sequence,
    resize_area,
    smooth_spatiotemporal,
    sqrt_transform,
    square_transform,
    write_sequence,
)
from crowdcast.errors import AnnotationBoundsError, FileFormatError

from oracles import naive_smooth_3d


class TestAnnotations:
    def test_duplicate_frame_id_rejected(self):
        recs = [AnnotationRecord(0, 1, 2.0, 3.0), AnnotationRecord(0, 1, 4.0, 5.0)]
        with pytest.raises(ValueError, match="duplicate"):
            AnnotationStream(recs)

    def test_n_frames_spans_highest_index(self):
        s = AnnotationStream([AnnotationRecord(3, 0, 1.0, 1.0)])
        assert s.n_frames() == 4
        assert AnnotationStream([]).n_frames() == 0

    def test_csv_round_trip(self, tmp_path):
        s = AnnotationStream([
            AnnotationRecord(0, 0, 1.25, 2.5),
            AnnotationRecord(1, 7, 0.1, 79.9),
        ])
        p = tmp_path / "ann.csv"
        s.write_csv(p)
        assert p.read_text().splitlines()[0] == "frame,id,x,y"
        back = AnnotationStream.read_csv(p)
        assert back.records == s.records

    def test_csv_bad_header_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("frame,pid,x,y\n0,0,1,1\n")
        with pytest.raises(FileFormatError, match="header"):
            AnnotationStream.read_csv(p)


class TestRasterize:
    def test_single_annotation_single_cell(self):
        s = AnnotationStream([AnnotationRecord(0, 0, 3.2, 4.8)])
        seq = rasterize(s, 8, 8, 1)
        assert seq.frames[0, 5, 3] == 1.0
        assert seq.frames.sum() == 1.0

    def test_colliding_annotations_saturate_at_one(self):
        s = AnnotationStream([
            AnnotationRecord(0, 0, 2.1, 2.1),
            AnnotationRecord(0, 1, 1.9, 1.9),
        ])
        seq = rasterize(s, 8, 8, 1)
        assert seq.frames[0, 2, 2] == 1.0
        assert seq.frames.max() == 1.0

    def test_empty_frame_is_zero(self):
        s = AnnotationStream([AnnotationRecord(1, 0, 0.0, 0.0)])
        seq = rasterize(s, 4, 4, 2)
        assert not seq.frames[0].any()
        assert seq.frames[1, 0, 0] == 1.0

    def test_empty_stream_gives_all_zero_maps(self):
        seq = rasterize(AnnotationStream([]), 8, 8, 5)
        assert seq.frames.shape == (5, 8, 8)
        assert not seq.frames.any()

    def test_out_of_bounds_raises_with_details(self):
        s = AnnotationStream([AnnotationRecord(0, 5, 9.0, 1.0)])
        with pytest.raises(AnnotationBoundsError) as exc:
            rasterize(s, 8, 8, 1)
        assert "id=5" in str(exc.value)

    @given(st.permutations(list(range(6))))
    @settings(max_examples=25, deadline=None)
    def test_record_order_does_not_matter(self, order):
        recs = [AnnotationRecord(i % 2, i, float(i), float(5 - i)) for i in range(6)]
        base = rasterize(AnnotationStream(recs), 8, 8, 2).frames
        shuffled = rasterize(AnnotationStream([recs[i] for i in order]), 8, 8, 2).frames
        assert np.array_equal(base, shuffled)


class TestSmoothing:
    @pytest.mark.parametrize("sigma", [0.6, 1.0])
    def test_matches_nonseparable_oracle(self, sigma):
        rng = np.random.default_rng(0)
        frames = (rng.uniform(0, 1, (4, 5, 5)) < 0.2).astype(np.float32)
        seq = DensitySequence(frames)
        out = smooth_spatiotemporal(seq, sigma).frames
        expected = naive_smooth_3d(frames.astype(np.float64), sigma)
        assert np.allclose(out, expected, atol=1e-6)

    def test_all_zero_sequence_stays_zero(self):
        out = smooth_spatiotemporal(DensitySequence(np.zeros((3, 5, 5))), 2.0).frames
        assert not out.any()

    def test_interior_mass_preserved(self):
        # an impulse far from every border keeps unit total mass
        frames = np.zeros((9, 21, 21), dtype=np.float32)
        frames[4, 10, 10] = 1.0
        out = smooth_spatiotemporal(DensitySequence(frames), 1.0).frames
        assert abs(out.sum() - 1.0) < 1e-5

    def test_linearity(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 0.2, (3, 6, 6)).astype(np.float32)
        b = rng.uniform(0, 0.2, (3, 6, 6)).astype(np.float32)
        sa = smooth_spatiotemporal(DensitySequence(a), 1.0).frames
        sb = smooth_spatiotemporal(DensitySequence(b), 1.0).frames
        sab = smooth_spatiotemporal(DensitySequence(a + b), 1.0).frames
        assert np.allclose(sab, sa + sb, atol=1e-5)

    def test_output_stays_in_unit_interval(self):
        frames = np.ones((3, 4, 4), dtype=np.float32)
        out = smooth_spatiotemporal(DensitySequence(frames), 2.0).frames
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError, match="sigma"):
            smooth_spatiotemporal(DensitySequence(np.zeros((1, 2, 2))), 0.0)

    def test_kernel_is_normalized_and_symmetric(self):
        k = density.gaussian_kernel_1d(1.7)
        assert k.size == 2 * 6 + 1  # radius = ceil(5.1) = 6
        assert k.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(k, k[::-1])


class TestResize:
    def test_constant_map_stays_constant(self):
        m = np.full((8, 8), 0.3, dtype=np.float32)
        out = resize_area(m, 5, 3)
        assert out.shape == (3, 5)
        assert np.allclose(out, 0.3, atol=1e-6)

    def test_block_average_downscale(self):
        m = np.arange(16, dtype=np.float32).reshape(4, 4)
        out = resize_area(m, 2, 2)
        expected = np.array([[m[:2, :2].mean(), m[:2, 2:].mean()],
                             [m[2:, :2].mean(), m[2:, 2:].mean()]])
        assert np.allclose(out, expected, atol=1e-6)

    def test_two_by_two_collapses_to_mean(self):
        out = resize_area(np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32), 1, 1)
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(0.5, abs=1e-7)

    def test_mean_preserved_for_any_ratio(self):
        rng = np.random.default_rng(2)
        m = rng.uniform(0, 1, (7, 5)).astype(np.float32)
        out = resize_area(m, 3, 4)
        assert out.mean() == pytest.approx(m.mean(), abs=1e-6)


class TestTransforms:
    def test_sqrt_then_square_round_trip(self):
        rng = np.random.default_rng(3)
        seq = DensitySequence(rng.uniform(0, 1, (2, 4, 4)).astype(np.float32))
        back = square_transform(sqrt_transform(seq))
        assert np.allclose(back.frames, seq.frames, atol=1e-6)

    def test_sqrt_fixed_points_and_quarter(self):
        seq = DensitySequence(np.array([[[0.0, 1.0], [0.25, 0.25]]], dtype=np.float32))
        out = sqrt_transform(seq).frames
        assert out[0, 0, 0] == 0.0 and out[0, 0, 1] == 1.0
        assert np.allclose(out[0, 1], 0.5, atol=1e-7)


class TestSequenceFile:
    def _seq(self):
        rng = np.random.default_rng(4)
        return DensitySequence(rng.uniform(0, 1, (3, 6, 7)).astype(np.float32), 2.5)

    def test_round_trip_is_bitwise(self, tmp_path):
        seq = self._seq()
        p = tmp_path / "seq.cdmf"
        write_sequence(seq, p)
        back = read_sequence(p)
        assert np.array_equal(back.frames, seq.frames)
        assert back.frame_rate == seq.frame_rate

    def test_header_layout(self, tmp_path):
        p = tmp_path / "seq.cdmf"
        write_sequence(self._seq(), p)
        raw = p.read_bytes()
        assert raw[:4] == b"CDMF"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 7  # width
        assert int.from_bytes(raw[12:16], "little") == 6  # height
        assert int.from_bytes(raw[16:20], "little") == 3  # frames
        assert int.from_bytes(raw[20:24], "little") == 2500  # millihertz
        assert len(raw) == 24 + 4 * 3 * 6 * 7

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.cdmf"
        write_sequence(self._seq(), p)
        raw = bytearray(p.read_bytes())
        raw[:4] = b"NOPE"
        p.write_bytes(bytes(raw))
        with pytest.raises(FileFormatError, match="magic"):
            read_sequence(p)

    def test_truncated_payload_rejected(self, tmp_path):
        p = tmp_path / "cut.cdmf"
        write_sequence(self._seq(), p)
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(FileFormatError, match="truncated"):
            read_sequence(p)

    def test_unsupported_version_rejected(self, tmp_path):
        p = tmp_path / "v9.cdmf"
        write_sequence(self._seq(), p)
        raw = bytearray(p.read_bytes())
        raw[4] = 9
        p.write_bytes(bytes(raw))
        with pytest.raises(FileFormatError, match="version"):
            read_sequence(p)
