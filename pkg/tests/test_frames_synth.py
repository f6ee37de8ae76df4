import json
import zipfile

import numpy as np
import pytest

from wlr.errors import FrameFormatError, ParameterError, SpecError
from wlr.frames import FrameSequence, decode_pgm, encode_pgm, read_frames, write_frames
from wlr.model import BackgroundKind, BackgroundSpec, ForegroundEvent, SynthSpec
from wlr.synth import background_frame, load_spec, standard_spec, synth_video


def pgm(width, height, pixels, maxval=255, magic=b"P5"):
    return magic + f"\n{width} {height}\n{maxval}\n".encode() + bytes(pixels)


class TestFrameSequence:
    def test_column_major_vectorization(self):
        seq = FrameSequence.from_frames([np.array([[1.0, 2.0], [3.0, 4.0]])])
        np.testing.assert_array_equal(seq.data[:, 0], [1, 3, 2, 4])
        np.testing.assert_array_equal(seq.frame(0), [[1, 2], [3, 4]])

    def test_shape_must_match(self):
        with pytest.raises(ValueError):
            FrameSequence(height=2, width=3, data=np.zeros((5, 1)))

    @pytest.mark.parametrize("value", [-1.0, 255.5, np.nan])
    def test_pixels_outside_gray_range(self, value):
        data = np.full((4, 2), 100.0)
        data[2, 1] = value
        with pytest.raises(ParameterError):
            FrameSequence(height=2, width=2, data=data)

    def test_gray_range_bounds_are_accepted(self):
        seq = FrameSequence(height=1, width=2, data=np.array([[0.0], [255.0]]))
        assert seq.n_frames == 1


class TestPgm:
    def test_round_trip_small_frame(self, tmp_path):
        frame = np.array([[0.0, 128.0], [255.0, 7.0]])
        write_frames(FrameSequence.from_frames([frame]), tmp_path)
        seq = read_frames(tmp_path)
        assert (seq.height, seq.width, seq.n_frames) == (2, 2, 1)
        np.testing.assert_array_equal(seq.frame(0), frame)

    def test_rounds_and_clips(self):
        pixels = decode_pgm(encode_pgm(np.array([[-4.0, 12.6], [300.0, 99.4]])), "memory")
        np.testing.assert_array_equal(pixels, [[0, 13], [255, 99]])

    def test_header_written_as_binary_graymap(self):
        assert encode_pgm(np.zeros((2, 3))).startswith(b"P5")

    def test_three_frames_in_order(self, tmp_path):
        frames = [np.full((4, 4), float(10 * (j + 1))) for j in range(3)]
        paths = write_frames(FrameSequence.from_frames(frames), tmp_path)
        assert [p.name for p in paths] == ["frame_00000.pgm", "frame_00001.pgm", "frame_00002.pgm"]
        seq = read_frames(tmp_path)
        assert seq.data.shape == (16, 3)
        np.testing.assert_array_equal(seq.data[0], [10, 20, 30])

    def test_header_comment(self, tmp_path):
        raw = b"P5\n# scanned\n3 2\n255\n" + bytes([1, 2, 3, 4, 5, 6])
        (tmp_path / "a.pgm").write_bytes(raw)
        np.testing.assert_array_equal(read_frames(tmp_path).frame(0), [[1, 2, 3], [4, 5, 6]])

    def test_empty_directory(self, tmp_path):
        with pytest.raises(FrameFormatError, match="no frames found"):
            read_frames(tmp_path)

    def test_missing_path(self, tmp_path):
        with pytest.raises(FrameFormatError):
            read_frames(tmp_path / "absent")

    def test_wrong_magic(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(pgm(2, 2, [0] * 4, magic=b"P2"))
        with pytest.raises(FrameFormatError, match="P5"):
            read_frames(tmp_path)

    def test_sixteen_bit_maxval(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(pgm(2, 2, [0] * 8, maxval=65535))
        with pytest.raises(FrameFormatError, match="maxval"):
            read_frames(tmp_path)

    def test_mixed_dimensions(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(pgm(2, 2, [0] * 4))
        (tmp_path / "b.pgm").write_bytes(pgm(3, 2, [0] * 6))
        with pytest.raises(FrameFormatError) as info:
            read_frames(tmp_path)
        assert info.value.path.endswith("b.pgm")

    def test_other_files_are_ignored(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(pgm(2, 2, [9] * 4))
        (tmp_path / "notes.txt").write_text("not a frame")
        assert read_frames(tmp_path).n_frames == 1

    def test_zip_archive(self, tmp_path):
        archive = tmp_path / "frames.zip"
        with zipfile.ZipFile(archive, "w") as zf:
            zf.writestr("seq/frame_00001.pgm", pgm(2, 2, [5] * 4))
            zf.writestr("seq/frame_00000.pgm", pgm(2, 2, [1] * 4))
        seq = read_frames(archive)
        np.testing.assert_array_equal(seq.data[0], [1, 5])


class TestSynth:
    def test_no_events_no_noise_is_background(self):
        spec = SynthSpec(height=8, width=10, n_frames=5)
        A, truth, masks = synth_video(spec)
        np.testing.assert_array_equal(A.data, truth.data)
        assert not masks.data.any()

    def test_event_mask_and_amplitude(self):
        spec = SynthSpec(
            height=10, width=12, n_frames=4,
            background=BackgroundSpec(kind=BackgroundKind.CONSTANT, level=50),
            events=[ForegroundEvent(start_frame=1, end_frame=2, top=2, left=3, height=2, width=3, d_col=2,
                                    amplitude=60)],
        )
        A, _, masks = synth_video(spec)
        mask1 = masks.frame(1)
        assert mask1.sum() == 6 and mask1[2:4, 3:6].all()
        assert masks.frame(2)[2:4, 5:8].all()
        assert not masks.frame(0).any() and not masks.frame(3).any()
        assert A.frame(1)[2, 3] == 110

    def test_static_tail_freezes_box(self):
        spec = standard_spec()
        _, _, masks = synth_video(spec)
        for j in range(51, 60):
            np.testing.assert_array_equal(masks.data[:, j], masks.data[:, 50])
        assert not np.array_equal(masks.data[:, 48], masks.data[:, 50])

    def test_box_leaving_frame(self):
        spec = SynthSpec(height=10, width=10, n_frames=6,
                         events=[ForegroundEvent(start_frame=0, end_frame=5, top=0, left=5, height=3, width=3,
                                                 d_col=1)])
        with pytest.raises(SpecError, match="event 0"):
            synth_video(spec)

    def test_event_past_last_frame(self):
        spec = SynthSpec(height=10, width=10, n_frames=3,
                         events=[ForegroundEvent(start_frame=1, end_frame=3, top=0, left=0, height=2, width=2)])
        with pytest.raises(SpecError):
            synth_video(spec)

    def test_clipped_to_eight_bits(self):
        spec = SynthSpec(height=6, width=6, n_frames=3,
                         background=BackgroundSpec(kind=BackgroundKind.CONSTANT, level=240),
                         events=[ForegroundEvent(start_frame=0, end_frame=2, top=0, left=0, height=2, width=2,
                                                 amplitude=80)],
                         noise_sigma=5.0)
        A, _, _ = synth_video(spec)
        assert A.data.min() >= 0 and A.data.max() <= 255

    def test_seed_determinism(self):
        first, _, _ = synth_video(standard_spec(seed=3))
        second, _, _ = synth_video(standard_spec(seed=3))
        other, _, _ = synth_video(standard_spec(seed=4))
        np.testing.assert_array_equal(first.data, second.data)
        assert not np.array_equal(first.data, other.data)

    def test_drifting_gain(self):
        bg = BackgroundSpec(kind=BackgroundKind.DRIFTING_GAIN, low=50, high=100, gain_end=1.2)
        first = background_frame(bg, 4, 6, 0, 11)
        last = background_frame(bg, 4, 6, 10, 11)
        np.testing.assert_allclose(last, 1.2 * first)
        np.testing.assert_allclose(first[0], np.linspace(50, 100, 6))

    def test_drifting_spot_travels_across_the_frame(self):
        bg = BackgroundSpec(kind=BackgroundKind.DRIFTING_GAIN, low=50, high=100, gain_end=1.2,
                            drift_amplitude=40, drift_sigma=3)
        plain = bg.model_copy(update={"drift_amplitude": 0.0})
        first = background_frame(bg, 9, 20, 0, 11) - background_frame(plain, 9, 20, 0, 11)
        last = background_frame(bg, 9, 20, 10, 11) - background_frame(plain, 9, 20, 10, 11)
        assert np.unravel_index(np.argmax(first), first.shape) == (4, 0)
        assert np.unravel_index(np.argmax(last), last.shape) == (4, 19)
        assert first.max() == pytest.approx(40.0)
        assert first.min() >= 0

    def test_drifting_spot_raises_background_rank(self):
        spec = SynthSpec(
            height=12, width=30, n_frames=30,
            background=BackgroundSpec(kind=BackgroundKind.DRIFTING_GAIN, low=50, high=150,
                                      drift_amplitude=40, drift_sigma=3),
            noise_sigma=0.0,
        )
        _, truth, _ = synth_video(spec)
        s = np.linalg.svd(truth.data, compute_uv=False)
        assert int(np.sum(s > 1e-3 * s[0])) > 3
        flat = spec.model_copy(update={"background": spec.background.model_copy(update={"drift_amplitude": 0.0})})
        s_flat = np.linalg.svd(synth_video(flat)[1].data, compute_uv=False)
        assert int(np.sum(s_flat > 1e-3 * s_flat[0])) == 1

    def test_oscillating_texture(self):
        bg = BackgroundSpec(kind=BackgroundKind.OSCILLATING_TEXTURE, texture_amplitude=10, oscillation_period=20)
        still = background_frame(bg, 8, 8, 0, 40)
        moving = background_frame(bg, 8, 8, 5, 40)
        ramp = background_frame(BackgroundSpec(kind=BackgroundKind.GRADIENT), 8, 8, 0, 40)
        np.testing.assert_allclose(still, ramp)
        assert np.abs(moving - ramp).max() == pytest.approx(10.0)

    def test_load_spec(self, tmp_path):
        path = tmp_path / "video.json"
        path.write_text(json.dumps({
            "height": 12, "width": 16, "n_frames": 6,
            "background": {"kind": "drifting-gain", "low": 40, "high": 90},
            "events": [{"start_frame": 1, "end_frame": 3, "top": 2, "left": 2, "height": 3, "width": 3,
                        "d_col": 2, "static_tail": 1}],
            "noise_sigma": 1.0,
        }))
        spec = load_spec(path)
        assert spec.background.kind == BackgroundKind.DRIFTING_GAIN
        assert spec.events[0].position(3) == (2, 6)

    def test_load_spec_rejects_bad_json(self, tmp_path):
        path = tmp_path / "video.json"
        path.write_text(json.dumps({"height": -1, "width": 4, "n_frames": 2}))
        with pytest.raises(SpecError):
            load_spec(path)
