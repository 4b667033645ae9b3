import os
import tempfile
import unittest

import numpy as np

from crackSeg.config import config
from crackSeg.data.batches import batches_per_epoch, make_batches
from crackSeg.data.dataset import (
    DatasetIndex,
    IndexEntry,
    Sample,
    has_split,
    load_dataset,
    load_manifest,
    load_split,
    split,
    write_split,
)
from crackSeg.data.synthetic import generate_synthetic, write_synthetic_dataset
from crackSeg.data.transforms import adjust_lighting, augment, resize_crop, rotate
from crackSeg.errors import ConfigError, DimensionError, ImageFormatError, IngestionError
from crackSeg.models.configs import AugmentSpec
from crackSeg.utils.file_handler import write_manifest

NO_AUGMENT = dict(rotation_min=0.0, rotation_max=0.0, hflip_prob=0.0, vflip_prob=0.0, lighting_delta=0.0)


def fake_index(n):
    return DatasetIndex([IndexEntry(f"img{i:03d}", "", "") for i in range(n)], root="fake")


def gradient_sample(h, w, name="g"):
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    image = np.stack([rows / h, cols / w, np.full((h, w), 0.5)]).astype(np.float32)
    mask = ((rows + cols) % 7 == 0).astype(np.float32)[None]
    return Sample(name, image, mask)


class TestDataset(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = os.path.join(self.tmp.name, "dataset")

    def test_synthetic_round_trip(self):
        names = write_synthetic_dataset(self.root, count=4, size=32, seed=0)
        self.assertEqual(names, ["synthetic_000", "synthetic_001", "synthetic_002", "synthetic_003"])
        index = load_dataset(self.root)
        self.assertEqual(index.names(), names)
        samples = index.load()
        generated = generate_synthetic(4, 32, 0)
        for loaded, original in zip(samples, generated):
            self.assertEqual(loaded.image.shape, (3, 32, 32))
            self.assertEqual(loaded.mask.shape, (1, 32, 32))
            self.assertEqual(loaded.image.dtype, np.float32)
            np.testing.assert_array_equal(loaded.mask, original.mask)
            np.testing.assert_allclose(loaded.image, original.image, atol=1.0 / 255.0)

    def test_synthetic_masks_are_thin_and_dark(self):
        for sample in generate_synthetic(count=5, size=64, seed=3):
            self.assertTrue(set(np.unique(sample.mask)) <= {0.0, 1.0})
            self.assertGreater(sample.mask.sum(), 0)
            self.assertLess(sample.mask.mean(), 0.5)
            cracks = sample.image[:, sample.mask[0] > 0]
            background = sample.image[:, sample.mask[0] == 0]
            self.assertLess(cracks.max(), background.min())

    def test_orphan_image(self):
        write_synthetic_dataset(self.root, count=3, size=32)
        os.remove(os.path.join(self.root, "masks", "synthetic_001.png"))
        with self.assertRaisesRegex(IngestionError, r"synthetic_001 \(no mask\)"):
            load_dataset(self.root)

    def test_non_png_file(self):
        write_synthetic_dataset(self.root, count=2, size=32)
        with open(os.path.join(self.root, "images", "notes.txt"), "w") as stream:
            stream.write("not an image")
        with self.assertRaises(ImageFormatError):
            load_dataset(self.root)

    def test_missing_directory(self):
        os.makedirs(os.path.join(self.root, "images"))
        with self.assertRaises(IngestionError):
            load_dataset(self.root)

    def test_empty_dataset_warns(self):
        os.makedirs(os.path.join(self.root, "images"))
        os.makedirs(os.path.join(self.root, "masks"))
        with self.assertLogs(config.logger, level="WARNING") as logs:
            index = load_dataset(self.root)
        self.assertEqual(len(index), 0)
        self.assertIn("empty", logs.output[0])

    def test_split_sizes(self):
        train, test = split(fake_index(118), train_ratio=0.6, seed=0)
        self.assertEqual((len(train), len(test)), (71, 47))
        train, test = split(fake_index(118), train_ratio=0.61, seed=0)
        self.assertEqual((len(train), len(test)), (72, 46))

    def test_split_is_seeded_partition(self):
        index = fake_index(40)
        train_a, test_a = split(index, seed=5)
        train_b, test_b = split(index, seed=5)
        self.assertEqual(train_a.names(), train_b.names())
        self.assertEqual(test_a.names(), test_b.names())
        self.assertFalse(set(train_a.names()) & set(test_a.names()))
        self.assertEqual(sorted(train_a.names() + test_a.names()), index.names())
        self.assertEqual(train_a.names(), sorted(train_a.names()))
        train_c, _ = split(index, seed=6)
        self.assertNotEqual(train_a.names(), train_c.names())

    def test_split_rejects_bad_ratio(self):
        with self.assertRaises(ConfigError):
            split(fake_index(10), train_ratio=1.0)

    def test_manifests(self):
        write_synthetic_dataset(self.root, count=5, size=32)
        self.assertFalse(has_split(self.root))
        train, test = split(load_dataset(self.root), seed=1)
        write_split(self.root, train, test)
        self.assertTrue(has_split(self.root))
        loaded_train, loaded_test = load_split(self.root)
        self.assertEqual(loaded_train.names(), train.names())
        self.assertEqual(loaded_test.names(), test.names())
        manifest = os.path.join(self.root, config.TEST_MANIFEST)
        self.assertEqual(load_manifest(self.root, manifest).names(), test.names())

    def test_overlapping_manifests(self):
        write_synthetic_dataset(self.root, count=3, size=32)
        write_manifest(os.path.join(self.root, config.TRAIN_MANIFEST), ["synthetic_000", "synthetic_001"])
        write_manifest(os.path.join(self.root, config.TEST_MANIFEST), ["synthetic_001", "synthetic_002"])
        with self.assertRaisesRegex(IngestionError, "synthetic_001"):
            load_split(self.root)

    def test_unknown_manifest_name(self):
        with self.assertRaises(IngestionError):
            fake_index(3).select(["img000", "img999"])

    def test_sample_shape_checks(self):
        with self.assertRaises(DimensionError):
            Sample("bad", np.zeros((3, 4, 4)), np.zeros((1, 4, 5)))


class TestTransforms(unittest.TestCase):
    def test_center_crop_without_resize(self):
        sample = gradient_sample(320, 480)
        out = resize_crop(sample, 320, mode="eval")
        np.testing.assert_array_equal(out.image, sample.image[:, :, 80:400])
        np.testing.assert_array_equal(out.mask, sample.mask[:, :, 80:400])

    def test_identity_when_already_square(self):
        sample = gradient_sample(64, 64)
        out = resize_crop(sample, 64, mode="eval")
        np.testing.assert_array_equal(out.image, sample.image)
        np.testing.assert_array_equal(out.mask, sample.mask)

    def test_resize_then_crop(self):
        out = resize_crop(gradient_sample(64, 96), 32, mode="train", rng=np.random.default_rng(0))
        self.assertEqual(out.image.shape, (3, 32, 32))
        self.assertEqual(out.mask.shape, (1, 32, 32))
        self.assertTrue(set(np.unique(out.mask)) <= {0.0, 1.0})

    def test_crop_size_must_be_multiple(self):
        with self.assertRaises(DimensionError):
            resize_crop(gradient_sample(64, 64), 48)

    def test_quarter_turns_are_exact(self):
        sample = gradient_sample(32, 48)
        clockwise = sample.image.transpose(0, 2, 1)[:, :, ::-1]
        image, mask = rotate(sample.image, sample.mask, 90)
        np.testing.assert_array_equal(image, clockwise)
        np.testing.assert_array_equal(mask, sample.mask.transpose(0, 2, 1)[:, :, ::-1])
        image, _ = rotate(sample.image, sample.mask, 180)
        np.testing.assert_array_equal(image, sample.image[:, ::-1, ::-1])
        image, _ = rotate(sample.image, sample.mask, 270)
        np.testing.assert_array_equal(image, sample.image.transpose(0, 2, 1)[:, ::-1, :])
        image, _ = rotate(sample.image, sample.mask, 360)
        np.testing.assert_array_equal(image, sample.image)

    def test_arbitrary_rotation_keeps_mask_binary(self):
        sample = gradient_sample(32, 32)
        image, mask = rotate(sample.image, sample.mask, 33.0)
        self.assertEqual(image.shape, (3, 32, 32))
        self.assertTrue(set(np.unique(mask)) <= {0.0, 1.0})

    def test_identity_augmentation(self):
        sample = gradient_sample(32, 32)
        out = augment(sample, AugmentSpec(**NO_AUGMENT), np.random.default_rng(0))
        np.testing.assert_array_equal(out.image, sample.image)
        np.testing.assert_array_equal(out.mask, sample.mask)

    def test_forced_rotation_and_flip(self):
        sample = gradient_sample(32, 32)
        spec = AugmentSpec(**{**NO_AUGMENT, "rotation_min": 90.0, "rotation_max": 90.0})
        out = augment(sample, spec, np.random.default_rng(0))
        np.testing.assert_array_equal(out.image, sample.image.transpose(0, 2, 1)[:, :, ::-1])

        spec = AugmentSpec(**{**NO_AUGMENT, "hflip_prob": 1.0})
        out = augment(sample, spec, np.random.default_rng(0))
        np.testing.assert_array_equal(out.image, sample.image[:, :, ::-1])
        np.testing.assert_array_equal(out.mask, sample.mask[:, :, ::-1])

    def test_random_augmentation_keeps_masks_binary(self):
        rng = np.random.default_rng(4)
        sample = gradient_sample(32, 32)
        for _ in range(10):
            out = augment(sample, AugmentSpec(), rng)
            self.assertTrue(set(np.unique(out.mask)) <= {0.0, 1.0})
            self.assertTrue(np.all((out.image >= 0.0) & (out.image <= 1.0)))

    def test_augment_consumes_fixed_draws(self):
        sample = gradient_sample(32, 32)
        a, b = np.random.default_rng(9), np.random.default_rng(9)
        augment(sample, AugmentSpec(), a)
        augment(sample, AugmentSpec(**NO_AUGMENT), b)
        self.assertEqual(a.random(), b.random())

    def test_lighting(self):
        image = np.full((3, 2, 2), 0.5, dtype=np.float32)
        np.testing.assert_allclose(adjust_lighting(image, 0.1, 0.0), 0.6, rtol=1e-6)
        np.testing.assert_array_equal(adjust_lighting(image, 0.8, 0.0), 1.0)


class TestBatches(unittest.TestCase):
    def setUp(self):
        self.samples = generate_synthetic(count=10, size=64, seed=2)

    def test_eval_batches(self):
        batches = list(make_batches(self.samples, batch_size=4, size=32))
        self.assertEqual([images.shape[0] for images, _ in batches], [4, 4, 2])
        self.assertEqual(batches_per_epoch(10, 4), 3)
        images, masks = batches[0]
        self.assertEqual(images.shape, (4, 3, 32, 32))
        self.assertEqual(masks.shape, (4, 1, 32, 32))
        np.testing.assert_array_equal(images.data[0], resize_crop(self.samples[0], 32).image)

    def test_train_stream_is_seeded(self):
        spec = AugmentSpec()
        first = list(make_batches(self.samples, 4, 32, "train", spec, np.random.default_rng(1)))
        second = list(make_batches(self.samples, 4, 32, "train", spec, np.random.default_rng(1)))
        for (images_a, masks_a), (images_b, masks_b) in zip(first, second):
            np.testing.assert_array_equal(images_a.data, images_b.data)
            np.testing.assert_array_equal(masks_a.data, masks_b.data)

    def test_dtype_and_rng_requirement(self):
        images, _ = next(make_batches(self.samples, 2, 32, dtype="float64"))
        self.assertEqual(images.dtype, np.float64)
        with self.assertRaises(ValueError):
            next(make_batches(self.samples, 2, 32, mode="train"))


if __name__ == "__main__":
    unittest.main()
