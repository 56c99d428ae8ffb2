"""Hyperspectral cube I/O and stratified splitting.

On-disk layout:
  header  — JSON: {height, width, raw_bands, excluded_bands, data_file,
            label_file, class_names, dataset_id}
  data    — band-sequential float32 little-endian, H*W*raw_bands values,
            row-major within each band plane
  labels  — uint16 little-endian, H*W values row-major, 0 = unlabeled
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

TRAIN, VAL, TEST = 0, 1, 2
PARTITION_NAMES = {"train": TRAIN, "validation": VAL, "test": TEST}


class HsiFormatError(ValueError):
    """Header, data file and label file disagree."""


@dataclass
class HsiCube:
    reflectance: np.ndarray       # H x W x B float32, excluded bands removed
    labels: np.ndarray            # H x W int, 0 = unlabeled
    class_names: list
    dataset_id: str = ""

    @property
    def height(self):
        return self.reflectance.shape[0]

    @property
    def width(self):
        return self.reflectance.shape[1]

    @property
    def bands(self):
        return self.reflectance.shape[2]

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def value_range(self):
        return float(self.reflectance.min()), float(self.reflectance.max())

    def labeled_mask(self):
        return self.labels > 0


@dataclass
class SplitAssignment:
    partition: np.ndarray         # H x W int8, -1 = none, else TRAIN/VAL/TEST
    fractions: tuple
    seed: int

    def mask(self, which):
        code = PARTITION_NAMES[which] if isinstance(which, str) else which
        return self.partition == code

    def counts(self):
        return {name: int((self.partition == code).sum())
                for name, code in PARTITION_NAMES.items()}


def load_cube(header_path):
    """Load a cube from its JSON header, dropping excluded bands."""
    if not os.path.exists(header_path):
        raise FileNotFoundError(f"header not found: {header_path}")
    with open(header_path) as fh:
        hdr = json.load(fh)
    base = os.path.dirname(os.path.abspath(header_path))
    h, w, raw_bands = int(hdr["height"]), int(hdr["width"]), int(hdr["raw_bands"])
    excluded = sorted(set(int(b) for b in hdr.get("excluded_bands", [])))
    for b in excluded:
        if not 0 <= b < raw_bands:
            raise HsiFormatError(f"excluded band index {b} outside [0, {raw_bands - 1}]")

    data_path = os.path.join(base, hdr["data_file"])
    if not os.path.exists(data_path):
        raise FileNotFoundError(f"data file not found: {data_path}")
    raw = np.fromfile(data_path, dtype="<f4")
    expected = h * w * raw_bands
    if raw.size != expected:
        raise HsiFormatError(
            f"data size mismatch: header declares {h}x{w}x{raw_bands} = {expected} floats, "
            f"file holds {raw.size}")
    cube = raw.reshape(raw_bands, h, w).transpose(1, 2, 0)
    keep = [b for b in range(raw_bands) if b not in excluded]
    cube = np.ascontiguousarray(cube[:, :, keep])
    if not np.all(np.isfinite(cube)):
        raise HsiFormatError("reflectance values must be finite")

    label_path = os.path.join(base, hdr["label_file"])
    if not os.path.exists(label_path):
        raise FileNotFoundError(f"label file not found: {label_path}")
    labels = np.fromfile(label_path, dtype="<u2")
    if labels.size != h * w:
        raise HsiFormatError(
            f"label size mismatch: expected {h * w} values, file holds {labels.size}")
    labels = labels.reshape(h, w).astype(np.int64)
    class_names = list(hdr["class_names"])
    if labels.max(initial=0) > len(class_names):
        raise HsiFormatError(
            f"label {labels.max()} out of range: only {len(class_names)} classes declared")

    return HsiCube(reflectance=cube, labels=labels, class_names=class_names,
                   dataset_id=hdr.get("dataset_id", ""))


def save_cube(cube, out_dir, name="cube", excluded_bands=()):
    """Write header + raw data + labels; returns the header path.

    ``excluded_bands`` here is only recorded in the header for cubes that
    already contain extra bands to drop on reload; the reflectance array
    is written as-is.
    """
    os.makedirs(out_dir, exist_ok=True)
    h, w, b = cube.reflectance.shape
    data_file = f"{name}.dat"
    label_file = f"{name}.lbl"
    cube.reflectance.transpose(2, 0, 1).astype("<f4").tofile(os.path.join(out_dir, data_file))
    cube.labels.astype("<u2").tofile(os.path.join(out_dir, label_file))
    hdr = {
        "height": h, "width": w, "raw_bands": b,
        "excluded_bands": list(excluded_bands),
        "data_file": data_file, "label_file": label_file,
        "class_names": list(cube.class_names),
        "dataset_id": cube.dataset_id,
    }
    header_path = os.path.join(out_dir, f"{name}.json")
    with open(header_path, "w") as fh:
        json.dump(hdr, fh, indent=2)
    return header_path


def stratified_split(cube, fractions, seed):
    """Per-class shuffle then contiguous fraction slicing.

    Train and validation counts are rounded to the nearest pixel (but at
    least 1 each); the remainder goes to test. This keeps every class's
    partition fraction within one pixel's worth of its target.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got sum {sum(fractions)}")

    part = np.full(cube.labels.shape, -1, dtype=np.int8)
    rng = np.random.default_rng(seed)
    flat_labels = cube.labels.reshape(-1)
    for c in range(1, cube.num_classes + 1):
        idx = np.flatnonzero(flat_labels == c)
        n = idx.size
        if n == 0:
            continue
        if n < 3:
            raise ValueError(f"class {c} has only {n} labeled pixels; cannot fill all partitions")
        rng.shuffle(idx)
        n_train = min(max(1, int(n * fractions[0] + 0.5)), n - 2)
        n_val = min(max(1, int(n * fractions[1] + 0.5)), n - n_train - 1)
        flat = part.reshape(-1)
        flat[idx[:n_train]] = TRAIN
        flat[idx[n_train:n_train + n_val]] = VAL
        flat[idx[n_train + n_val:]] = TEST
    return SplitAssignment(partition=part, fractions=fractions, seed=int(seed))


def iterate_pixels(cube, assignment, which):
    """Yield (spectrum float64, label, (row, col)) for one partition, row-major order."""
    mask = assignment.mask(which)
    rows, cols = np.nonzero(mask)
    for r, c in zip(rows, cols):
        yield cube.reflectance[r, c].astype(np.float64), int(cube.labels[r, c]), (int(r), int(c))
