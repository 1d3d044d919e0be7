"""PFM round trips, image I/O, normalization, synthetic pair generation."""

import numpy as np
import pytest
from PIL import Image

from stereokit import dataio as D
from stereokit.tensor import Tensor


class TestPfm:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(4, 5)).astype(np.float32)
        data[0, 0] = -3.25
        data[1, 1] = np.float32(1e-40)  # denormal
        path = tmp_path / "m.pfm"
        D.write_pfm(path, data)
        back, scale = D.read_pfm(path)
        assert scale == -1.0
        assert back.tobytes() == data.tobytes()

    def test_three_channel_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.normal(size=(3, 2, 3)).astype(np.float32)
        path = tmp_path / "c.pfm"
        D.write_pfm(path, data)
        back, _ = D.read_pfm(path)
        assert back.shape == (3, 2, 3)
        assert back.tobytes() == data.tobytes()

    def test_big_endian_scale_parses(self, tmp_path):
        data = np.arange(6, dtype=">f4").reshape(2, 3)
        path = tmp_path / "be.pfm"
        with open(path, "wb") as f:
            f.write(b"Pf\n3 2\n1.0\n")
            f.write(np.ascontiguousarray(data[::-1]).tobytes())
        back, scale = D.read_pfm(path)
        assert scale == 1.0
        np.testing.assert_array_equal(back, data.astype(np.float32))

    def test_row_order_is_bottom_to_top_in_file(self, tmp_path):
        data = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        path = tmp_path / "rows.pfm"
        D.write_pfm(path, data)
        raw = path.read_bytes()
        payload = np.frombuffer(raw[raw.index(b"-1.0\n") + 5 :], dtype="<f4")
        np.testing.assert_array_equal(payload, [3.0, 4.0, 1.0, 2.0])

    def test_malformed_inputs_rejected(self, tmp_path):
        bad = tmp_path / "bad.pfm"
        bad.write_bytes(b"P6\n2 2\n-1.0\n" + b"\x00" * 16)
        with pytest.raises(ValueError, match="not a PFM"):
            D.read_pfm(bad)
        trunc = tmp_path / "trunc.pfm"
        trunc.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 8)
        with pytest.raises(ValueError, match="truncated"):
            D.read_pfm(trunc)


class TestImages:
    def test_ppm_p6_fixture(self, tmp_path):
        # hand-written 3x2 P6 payload
        path = tmp_path / "f.ppm"
        pixels = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90])
        path.write_bytes(b"P6\n3 2\n255\n" + pixels)
        img = D.read_image(path)
        assert img.shape == (2, 3, 3)
        np.testing.assert_array_equal(img.data[0, 0], [255, 0, 0])
        np.testing.assert_array_equal(img.data[1, 2], [70, 80, 90])

    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        arr = rng.integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
        path = tmp_path / "img.png"
        D.write_image(path, arr.astype(np.float32))
        back = D.read_image(path)
        np.testing.assert_array_equal(back.data, arr.astype(np.float32))

    def test_non_rgb_rejected(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), np.uint8), mode="L").save(path)
        with pytest.raises(ValueError, match="RGB"):
            D.read_image(path)

    def test_disparity_png_endpoints_and_nan(self, tmp_path):
        vals = np.array([[0.0, 16.0], [np.nan, 8.0]])
        path = tmp_path / "d.png"
        D.write_disparity_png(path, vals, max_disp=16.0)
        img = np.asarray(Image.open(path))
        np.testing.assert_array_equal(img[0, 0], D._RAMP[0])   # first ramp color
        np.testing.assert_array_equal(img[0, 1], D._RAMP[-1])  # last ramp color
        np.testing.assert_array_equal(img[1, 0], [0, 0, 0])    # invalid -> black


class TestNormalize:
    def test_affine_endpoints(self):
        vals = np.array([0.0, 127.5, 255.0], dtype=np.float32)
        out = D.normalize(vals)
        np.testing.assert_allclose(out, [-1.0, 0.0, 1.0], atol=1e-7)

    def test_inverse_recovers_input(self):
        rng = np.random.default_rng(3)
        vals = rng.uniform(0, 255, size=100).astype(np.float32)
        out = D.normalize(vals)
        assert (out >= -1).all() and (out <= 1).all()
        # exact to one ulp of the [-1,1] domain, i.e. 127.5*eps after mapping back
        np.testing.assert_allclose((out + 1.0) * 127.5, vals, atol=127.5 * np.finfo(np.float32).eps)

    def test_tensor_input_gives_tensor(self):
        out = D.normalize(Tensor(np.full((2, 2, 3), 255.0, dtype=np.float32)))
        assert isinstance(out, Tensor)
        np.testing.assert_allclose(out.data, 1.0)


class TestSynthPair:
    def test_zero_disparity_right_equals_left(self):
        s = D.synth_pair(D.SynthSpec(width=64, height=16, seed=0, kind="constant", d0=0.0))
        np.testing.assert_allclose(s.right.data, s.left.data, atol=1e-5)
        np.testing.assert_array_equal(s.gt_left.values.data, 0.0)
        assert s.valid_mask.all()

    def test_integer_shift_exact(self):
        s = D.synth_pair(D.SynthSpec(width=64, height=16, seed=1, kind="constant", d0=5.0))
        # left pixel x matches right pixel x-5 bit-exactly where valid
        np.testing.assert_array_equal(s.right.data[:, :-5], s.left.data[:, 5:])
        assert not s.valid_mask[:, :5].any()
        assert s.valid_mask[:, 5:].all()

    def test_validity_mask_definition(self):
        s = D.synth_pair(D.SynthSpec(width=64, height=8, seed=2, kind="constant", d0=7.25))
        cols = np.arange(64)
        expected = (cols - s.gt_left.values.data) >= 0
        np.testing.assert_array_equal(s.valid_mask, expected)

    def test_fractional_shift_wta_recovers_integer_part(self):
        from stereokit.classical import MatchConfig, grayscale, wta_match

        s = D.synth_pair(D.SynthSpec(width=96, height=32, seed=3, kind="constant", d0=5.3))
        disp, _ = wta_match(grayscale(s.left), grayscale(s.right), MatchConfig(window=9, max_disp=12))
        interior = disp.values.data[4:-4, 24:-4]
        assert (interior == 5.0).mean() > 0.9

    def test_ramp_ground_truth_consistency(self):
        s = D.synth_pair(D.SynthSpec(width=96, height=16, seed=4, kind="ramp", d0=2.0, d1=9.0))
        gt = s.gt_left.values.data
        assert gt[0, 0] == pytest.approx(2.0)
        assert gt[0, -1] == pytest.approx(9.0)
        # right view warp: right[u] == left[u + d_right(u)] up to interpolation
        u = 40
        dr = s.gt_right.values.data[0, u]
        x = u + dr
        i0, f = int(np.floor(x)), x - np.floor(x)
        expect = s.left.data[:, i0] * (1 - f) + s.left.data[:, i0 + 1] * f
        np.testing.assert_allclose(s.right.data[:, u], expect, atol=1e-4)

    def test_blocks_nearer_surface_wins(self):
        spec = D.SynthSpec(
            width=96, height=24, seed=5, kind="blocks", d0=2.0, blocks=[(30, 60, 4, 20, 10.0)]
        )
        s = D.synth_pair(spec)
        gt = s.gt_left.values.data
        assert gt[10, 45] == 10.0
        assert gt[10, 5] == 2.0
        assert gt[1, 45] == 2.0  # outside the block rows
        # right view: at u=35 the block surface (x=45 in-block) hides the background
        np.testing.assert_allclose(
            s.right.data[10, 35], s.left.data[10, 45], atol=1e-4
        )

    def test_deterministic_per_seed(self):
        a = D.synth_pair(D.SynthSpec(width=48, height=12, seed=9, kind="constant", d0=3.0))
        b = D.synth_pair(D.SynthSpec(width=48, height=12, seed=9, kind="constant", d0=3.0))
        np.testing.assert_array_equal(a.left.data, b.left.data)
        np.testing.assert_array_equal(a.right.data, b.right.data)

    def test_disparity_bound_enforced(self):
        with pytest.raises(ValueError, match="width/4"):
            D.synth_pair(D.SynthSpec(width=32, height=8, seed=0, kind="constant", d0=9.0))


class TestLoaders:
    def _write_rgb(self, path, seed, shape=(8, 10, 3)):
        rng = np.random.default_rng(seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        arr = rng.integers(0, 256, size=shape).astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(path)
        return arr

    def test_sceneflow_fixture(self, tmp_path):
        root = tmp_path / "sf"
        lp = root / "frames_finalpass" / "TRAIN" / "A" / "0000" / "left" / "0006.png"
        rp = root / "frames_finalpass" / "TRAIN" / "A" / "0000" / "right" / "0006.png"
        self._write_rgb(lp, 10)
        self._write_rgb(rp, 11)
        rng = np.random.default_rng(12)
        for side in ("left", "right"):
            dp = root / "disparity" / "TRAIN" / "A" / "0000" / side / "0006.pfm"
            dp.parent.mkdir(parents=True, exist_ok=True)
            D.write_pfm(dp, rng.uniform(0, 4, (8, 10)).astype(np.float32))
        sample = D.load_sceneflow_sample(lp)
        assert sample.left.shape == (8, 10, 3)
        assert sample.gt_left.shape == (8, 10)
        assert sample.gt_right is not None
        assert sample.valid_mask.all()

    def test_kitti_fixture(self, tmp_path):
        root = tmp_path / "kitti"
        self._write_rgb(root / "image_2" / "000000_10.png", 13)
        self._write_rgb(root / "image_3" / "000000_10.png", 14)
        dd = root / "disp_occ_0"
        dd.mkdir(parents=True)
        raw = np.zeros((8, 10), np.uint16)
        raw[2:, 3:] = (np.float32(2.5) * 256).astype(np.uint16)
        Image.fromarray(raw).save(dd / "000000_10.png")
        sample = D.load_kitti_sample(root, "000000_10")
        assert sample.gt_left.values.data[3, 4] == pytest.approx(2.5)
        assert not sample.valid_mask[0, 0]
        assert sample.valid_mask[3, 4]
