import json
import os
import tempfile
import unittest

import numpy as np

from crackSeg.errors import ConfigError, ImageFormatError, IngestionError
from crackSeg.utils.file_handler import (
    append_json_line,
    read_manifest,
    read_png,
    write_json,
    write_manifest,
    write_png,
)
from crackSeg.utils.yaml_handler import read_yaml, write_yaml


class TestYamlHandler(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_read_yaml_text(self):
        data = read_yaml(yaml_text="lr_max: 0.01\nsizes: [64, 128]\n")
        self.assertEqual(data, {"lr_max": 0.01, "sizes": [64, 128]})

    def test_read_yaml_empty_document(self):
        path = os.path.join(self.tmp.name, "empty.yaml")
        open(path, "w").close()
        self.assertEqual(read_yaml(filename=path), {})

    def test_read_yaml_nothing_given(self):
        self.assertIsNone(read_yaml())

    def test_read_yaml_rejects_non_mapping(self):
        with self.assertRaises(ConfigError):
            read_yaml(yaml_text="- a\n- b\n")

    def test_read_yaml_rejects_invalid(self):
        with self.assertRaises(ConfigError):
            read_yaml(yaml_text="key: [unclosed\n")

    def test_write_yaml(self):
        path = os.path.join(self.tmp.name, "out.yaml")
        write_yaml({"key": "value"}, filename=path)
        self.assertEqual(read_yaml(filename=path), {"key": "value"})


class TestFileHandler(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_png_keeps_rgb_order(self):
        image = np.zeros((4, 5, 3), dtype=np.uint8)
        image[..., 0] = 200
        path = os.path.join(self.tmp.name, "nested", "red.png")
        write_png(path, image)
        loaded = read_png(path)
        self.assertEqual(loaded.shape, (4, 5, 3))
        np.testing.assert_array_equal(loaded, image)

    def test_png_grayscale(self):
        mask = np.array([[0, 255], [255, 0]], dtype=np.uint8)
        path = os.path.join(self.tmp.name, "mask.png")
        write_png(path, mask)
        np.testing.assert_array_equal(read_png(path, grayscale=True), mask)

    def test_read_png_rejects_other_extensions(self):
        with self.assertRaises(ImageFormatError):
            read_png(os.path.join(self.tmp.name, "image.jpg"))

    def test_read_png_rejects_garbage(self):
        path = os.path.join(self.tmp.name, "broken.png")
        with open(path, "wb") as stream:
            stream.write(b"not a png")
        with self.assertRaises(ImageFormatError):
            read_png(path)

    def test_manifest(self):
        path = os.path.join(self.tmp.name, "train.txt")
        write_manifest(path, ["b", "a"])
        self.assertEqual(read_manifest(path), ["b", "a"])
        with self.assertRaises(IngestionError):
            read_manifest(os.path.join(self.tmp.name, "missing.txt"))

    def test_json_and_json_lines(self):
        path = os.path.join(self.tmp.name, "report.json")
        write_json(path, {"f1": 0.5})
        with open(path) as stream:
            self.assertEqual(json.load(stream), {"f1": 0.5})

        log = os.path.join(self.tmp.name, "log.jsonl")
        append_json_line(log, {"epoch": 0})
        append_json_line(log, {"epoch": 1})
        with open(log) as stream:
            self.assertEqual([json.loads(line) for line in stream], [{"epoch": 0}, {"epoch": 1}])


if __name__ == "__main__":
    unittest.main()
