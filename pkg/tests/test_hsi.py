import json
import os

import numpy as np
import pytest

from gafunet.hsi import (HsiCube, HsiFormatError, iterate_pixels, load_cube,
                         save_cube, stratified_split)
from gafunet.synthetic import make_synthetic_cube


def write_raw_cube(tmp_path, height, width, raw_bands, excluded=(), labels=None,
                   class_names=("a", "b"), data=None, name="cube"):
    rng = np.random.default_rng(0)
    if data is None:
        data = rng.uniform(0, 1, size=(raw_bands, height, width)).astype("<f4")
    if labels is None:
        labels = np.zeros((height, width), dtype="<u2")
    data.astype("<f4").tofile(tmp_path / f"{name}.dat")
    np.asarray(labels, dtype="<u2").tofile(tmp_path / f"{name}.lbl")
    hdr = {"height": height, "width": width, "raw_bands": raw_bands,
           "excluded_bands": list(excluded), "data_file": f"{name}.dat",
           "label_file": f"{name}.lbl", "class_names": list(class_names),
           "dataset_id": name}
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(hdr))
    return str(path)


class TestLoadCube:
    def test_band_exclusion_fixes_band_count(self, tmp_path):
        # Indian-Pines-like geometry at reduced size: 24 of 34 raw bands excluded
        path = write_raw_cube(tmp_path, 6, 5, 34, excluded=range(10, 34),
                              class_names=[f"c{i}" for i in range(16)])
        cube = load_cube(path)
        assert cube.bands == 10
        assert cube.num_classes == 16

    def test_band_sequential_layout(self, tmp_path):
        data = np.arange(2 * 2 * 3, dtype="<f4").reshape(3, 2, 2)  # band-major
        path = write_raw_cube(tmp_path, 2, 2, 3, data=data)
        cube = load_cube(path)
        # pixel (0,0) takes one value from each band plane
        np.testing.assert_array_equal(cube.reflectance[0, 0], [0.0, 4.0, 8.0])

    def test_all_unlabeled_cube_is_valid(self, tmp_path):
        path = write_raw_cube(tmp_path, 2, 2, 3)
        cube = load_cube(path)
        assert cube.labeled_mask().sum() == 0

    def test_missing_data_file(self, tmp_path):
        path = write_raw_cube(tmp_path, 2, 2, 3)
        os.remove(tmp_path / "cube.dat")
        with pytest.raises(FileNotFoundError):
            load_cube(path)

    def test_size_mismatch(self, tmp_path):
        path = write_raw_cube(tmp_path, 2, 2, 3)
        np.zeros(5, dtype="<f4").tofile(tmp_path / "cube.dat")
        with pytest.raises(HsiFormatError, match="size mismatch"):
            load_cube(path)

    def test_label_out_of_range(self, tmp_path):
        labels = np.full((2, 2), 7, dtype="<u2")  # only 2 classes declared
        path = write_raw_cube(tmp_path, 2, 2, 3, labels=labels)
        with pytest.raises(HsiFormatError, match="out of range"):
            load_cube(path)

    def test_round_trip_bit_exact(self, tmp_path):
        cube = make_synthetic_cube(8, 6, 12, 2, seed=3)
        path = save_cube(cube, str(tmp_path / "rt"))
        again = load_cube(path)
        np.testing.assert_array_equal(again.reflectance, cube.reflectance)
        np.testing.assert_array_equal(again.labels, cube.labels)
        assert again.class_names == cube.class_names


def labeled_cube(counts, bands=4, seed=0):
    """Cube whose classes have exactly the given labeled pixel counts."""
    total = sum(counts)
    side = int(np.ceil(np.sqrt(total)))
    labels = np.zeros(side * side, dtype=np.int64)
    pos = 0
    for c, n in enumerate(counts, start=1):
        labels[pos:pos + n] = c
        pos += n
    rng = np.random.default_rng(seed)
    return HsiCube(reflectance=rng.uniform(0, 1, size=(side, side, bands)).astype(np.float32),
                   labels=labels.reshape(side, side),
                   class_names=[f"c{i}" for i in range(len(counts))])


class TestStratifiedSplit:
    def test_exact_fractions_for_100(self):
        cube = labeled_cube([100])
        split = stratified_split(cube, (0.1, 0.1, 0.8), seed=0)
        assert split.counts() == {"train": 10, "validation": 10, "test": 80}

    def test_exact_fractions_for_10(self):
        cube = labeled_cube([10, 100])
        split = stratified_split(cube, (0.1, 0.1, 0.8), seed=1)
        small = split.partition[cube.labels == 1]
        assert [(small == k).sum() for k in (0, 1, 2)] == [1, 1, 8]

    def test_same_seed_identical(self):
        cube = labeled_cube([40, 60, 25])
        a = stratified_split(cube, (0.1, 0.1, 0.8), seed=5)
        b = stratified_split(cube, (0.1, 0.1, 0.8), seed=5)
        np.testing.assert_array_equal(a.partition, b.partition)

    def test_different_seeds_differ(self):
        cube = labeled_cube([40, 60, 25])
        base = stratified_split(cube, (0.1, 0.1, 0.8), seed=0)
        differs = sum(
            not np.array_equal(base.partition,
                               stratified_split(cube, (0.1, 0.1, 0.8), seed=s).partition)
            for s in range(1, 21))
        assert differs >= 19

    def test_stratification_within_one_pixel(self):
        cube = labeled_cube([13, 57, 101, 7])
        split = stratified_split(cube, (0.2, 0.2, 0.6), seed=2)
        for c in range(1, 5):
            mask = cube.labels == c
            n = mask.sum()
            for code, target in ((0, 0.2), (1, 0.2), (2, 0.6)):
                got = (split.partition[mask] == code).sum() / n
                assert abs(got - target) <= 1.0 / n + 1e-12

    def test_partitions_disjoint_and_exhaustive(self):
        cube = labeled_cube([30, 44])
        split = stratified_split(cube, (0.25, 0.25, 0.5), seed=3)
        labeled = cube.labeled_mask()
        assert np.all(split.partition[labeled] >= 0)
        assert np.all(split.partition[~labeled] == -1)

    def test_tiny_class_rejected(self):
        cube = labeled_cube([2, 50])
        with pytest.raises(ValueError, match="cannot fill"):
            stratified_split(cube, (0.1, 0.1, 0.8), seed=0)

    def test_bad_fractions_rejected(self):
        cube = labeled_cube([50])
        with pytest.raises(ValueError, match="sum"):
            stratified_split(cube, (0.2, 0.2, 0.7), seed=0)


class TestIteratePixels:
    def setup_method(self):
        self.cube = labeled_cube([20, 35, 11], seed=4)
        self.split = stratified_split(self.cube, (0.2, 0.2, 0.6), seed=4)

    def test_partition_sizes_sum_to_labeled_count(self):
        total = sum(len(list(iterate_pixels(self.cube, self.split, p)))
                    for p in ("train", "validation", "test"))
        assert total == self.cube.labeled_mask().sum()

    def test_labels_in_range(self):
        for _, label, _ in iterate_pixels(self.cube, self.split, "train"):
            assert 1 <= label <= self.cube.num_classes

    def test_coordinate_union_equals_labeled_set(self):
        seen = set()
        for p in ("train", "validation", "test"):
            for _, _, rc in iterate_pixels(self.cube, self.split, p):
                assert rc not in seen
                seen.add(rc)
        expected = set(zip(*np.nonzero(self.cube.labeled_mask())))
        assert seen == {(int(r), int(c)) for r, c in expected}

    def test_spectrum_matches_cube(self):
        for spectrum, _, (r, c) in iterate_pixels(self.cube, self.split, "validation"):
            np.testing.assert_array_equal(spectrum, self.cube.reflectance[r, c])
            break
