import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from thinroads import tiling
from thinroads.model import NarrowRoadNet
from thinroads.synth import SynthConfig, generate_sample


class TestPlanWindows:
    def test_single_window(self):
        plan = tiling.plan_windows(1024, 1024, window=1024, stride=768)
        assert plan.origins == ((0, 0),)

    def test_four_windows_1792(self):
        plan = tiling.plan_windows(1792, 1792, window=1024, stride=768)
        assert plan.origins == ((0, 0), (0, 768), (768, 0), (768, 768))

    def test_clamped_final_origin(self):
        plan = tiling.plan_windows(2000, 1024, window=1024, stride=768)
        tops = sorted({o[0] for o in plan.origins})
        assert tops == [0, 768, 976]  # last clamped to 2000 - 1024

    def test_window_shrinks_for_small_rasters(self):
        plan = tiling.plan_windows(100, 80, window=1024, stride=768)
        assert plan.window == 96  # next multiple of 32 above the short side
        assert plan.stride <= plan.window
        assert plan.padded_w == 96

    def test_stride_validation(self):
        with pytest.raises(ValueError, match="stride"):
            tiling.plan_windows(512, 512, window=256, stride=0)
        with pytest.raises(ValueError, match="stride"):
            tiling.plan_windows(512, 512, window=256, stride=512)
        with pytest.raises(ValueError, match="window"):
            tiling.plan_windows(512, 512, window=100, stride=50)

    @settings(max_examples=100, deadline=None)
    @given(h=st.integers(32, 700), w=st.integers(32, 700),
           window=st.sampled_from([64, 128, 256]),
           stride_frac=st.floats(0.25, 1.0))
    def test_full_coverage_brute_force(self, h, w, window, stride_frac):
        stride = max(1, int(window * stride_frac))
        plan = tiling.plan_windows(h, w, window=window, stride=stride)
        cover = np.zeros((plan.padded_h, plan.padded_w), dtype=np.int32)
        for top, left in plan.origins:
            assert top + plan.window <= plan.padded_h
            assert left + plan.window <= plan.padded_w
            cover[top:top + plan.window, left:left + plan.window] += 1
        assert cover.min() >= 1


@pytest.fixture(scope="module")
def small_model():
    torch.manual_seed(0)
    return NarrowRoadNet(encoder="tiny").eval()


class TestPredictMosaic:
    def test_single_window_bitwise_equal_to_direct(self, small_model):
        sample = generate_sample(SynthConfig(size=96, seed=3), 0)
        direct = tiling.predict_window(small_model, sample.image)
        mosaic = tiling.predict_mosaic(sample.image, small_model,
                                       window=96, stride=96)
        assert mosaic.count.min() == 1
        assert np.array_equal(mosaic.prob, direct)

    def test_overlap_counts(self, small_model):
        rng = np.random.default_rng(0)
        raster = rng.integers(0, 256, (96, 160, 3), dtype=np.uint8)
        mosaic = tiling.predict_mosaic(raster, small_model, window=96, stride=64)
        assert mosaic.count.max() == 2  # two windows overlap by 32 columns
        assert mosaic.count.min() == 1
        assert mosaic.prob.min() >= 0 and mosaic.prob.max() <= 1

    def test_single_coverage_pixels_equal_their_window(self, small_model):
        # where only one window lands, the mosaic is that window's output,
        # bit for bit
        rng = np.random.default_rng(1)
        raster = rng.integers(0, 256, (96, 160, 3), dtype=np.uint8)
        mosaic = tiling.predict_mosaic(raster, small_model, window=96, stride=64)
        left = tiling.predict_window(small_model, raster[:, :96])
        single = mosaic.count == 1
        assert single[:, :64].all()
        assert np.array_equal(mosaic.prob[:, :64], left[:, :64])

    def test_duplicated_window_blending_is_idempotent(self, small_model):
        # averaging two passes over the same window reproduces one pass exactly
        rng = np.random.default_rng(2)
        raster = rng.integers(0, 256, (96, 96, 3), dtype=np.uint8)
        plan = tiling.plan_windows(96, 96, window=96, stride=96)
        doubled = tiling.WindowPlan(window=plan.window, stride=plan.stride,
                                    height=96, width=96, padded_h=96, padded_w=96,
                                    origins=((0, 0), (0, 0)))
        mosaic = tiling.predict_mosaic(raster, small_model, doubled)
        direct = tiling.predict_window(small_model, raster)
        assert mosaic.count.min() == 2
        assert np.array_equal(mosaic.prob, direct)

    def test_plan_raster_mismatch_rejected(self, small_model):
        plan = tiling.plan_windows(96, 96, window=96, stride=96)
        with pytest.raises(ValueError, match="plan"):
            tiling.predict_mosaic(np.zeros((128, 128, 3), dtype=np.uint8),
                                  small_model, plan)


class TestEvaluateMosaic:
    def test_perfect_probabilities(self):
        rng = np.random.default_rng(0)
        gt = (rng.random((64, 64)) < 0.3).astype(np.uint8)
        values, curve = tiling.evaluate_mosaic(gt.astype(np.float64), gt)
        assert values["iou"] == 1.0 and values["f1"] == 1.0
        assert curve.auc == pytest.approx(1.0)

    def test_mosaic_metrics_equal_tilewise_micro_counts(self):
        # stitching tiles into a mosaic and scoring once equals accumulating
        # per-tile counts when tiles do not overlap
        from thinroads import metrics
        rng = np.random.default_rng(4)
        tiles_prob = [rng.random((32, 32)) for _ in range(4)]
        tiles_gt = [(rng.random((32, 32)) < 0.4).astype(np.uint8) for _ in range(4)]
        mosaic_prob = np.block([[tiles_prob[0], tiles_prob[1]],
                                [tiles_prob[2], tiles_prob[3]]])
        mosaic_gt = np.block([[tiles_gt[0], tiles_gt[1]],
                              [tiles_gt[2], tiles_gt[3]]])
        values, _ = tiling.evaluate_mosaic(mosaic_prob, mosaic_gt)
        acc = metrics.ConfusionCounts()
        for prob, gt in zip(tiles_prob, tiles_gt):
            acc = metrics.accumulate((prob >= 0.5).astype(np.uint8), gt, acc)
        assert values["iou"] == metrics.iou(acc)
        assert values["f1"] == metrics.f1(acc)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="differ"):
            tiling.evaluate_mosaic(np.zeros((4, 4)), np.zeros((4, 5), dtype=np.uint8))


class TestRasterIO:
    def test_round_trip_probability_png(self, tmp_path):
        rng = np.random.default_rng(0)
        prob = rng.random((32, 32))
        path = tiling.save_probability_png(prob, tmp_path / "p.png")
        from PIL import Image
        back = np.asarray(Image.open(path), dtype=np.float64) / 255.0
        assert np.abs(back - prob).max() <= 0.5 / 255 + 1e-9

    def test_mask_png_values(self, tmp_path):
        mask = np.array([[0, 1], [1, 0]], dtype=np.uint8)
        path = tiling.save_mask_png(mask, tmp_path / "m.png")
        from PIL import Image
        back = np.asarray(Image.open(path))
        assert set(np.unique(back)) == {0, 255}

    def test_tile_directory_assembly(self, tmp_path):
        from PIL import Image
        rng = np.random.default_rng(1)
        full = rng.integers(0, 256, (64, 96, 3), dtype=np.uint8)
        tdir = tmp_path / "tiles"
        tdir.mkdir()
        rows = ["file,row,col"]
        for r in (0, 32):
            for c in (0, 32, 64):
                name = f"t_{r}_{c}.png"
                Image.fromarray(full[r:r + 32, c:c + 32]).save(tdir / name)
                rows.append(f"{name},{r},{c}")
        (tdir / "index.csv").write_text("\n".join(rows) + "\n")
        assembled = tiling.load_raster(tdir)
        assert np.array_equal(assembled, full)

    def test_missing_index_rejected(self, tmp_path):
        (tmp_path / "tiles").mkdir()
        with pytest.raises(FileNotFoundError, match="index.csv"):
            tiling.load_raster(tmp_path / "tiles")
