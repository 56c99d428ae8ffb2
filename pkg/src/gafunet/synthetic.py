"""Synthetic cube generator for convergence and end-to-end tests."""

import numpy as np

from .hsi import HsiCube


def make_synthetic_cube(height=32, width=32, bands=64, num_classes=3,
                        noise=0.03, seed=0, labeled_fraction=1.0):
    """Cube whose classes carry well-separated smooth spectra plus noise.

    Class c's prototype is a sinusoid with class-specific frequency and
    phase, scaled into [0.15, 0.85] so additive noise stays within the
    global range. Every pixel is labeled unless ``labeled_fraction`` < 1.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, bands)
    prototypes = np.stack([
        0.5 + 0.35 * np.sin(2 * np.pi * (c + 1) * t + c * np.pi / max(1, num_classes))
        for c in range(num_classes)
    ])

    labels = rng.integers(1, num_classes + 1, size=(height, width))
    if labeled_fraction < 1.0:
        drop = rng.random((height, width)) >= labeled_fraction
        labels[drop] = 0

    cube = np.empty((height, width, bands), dtype=np.float32)
    for r in range(height):
        for c in range(width):
            proto = prototypes[(labels[r, c] - 1) if labels[r, c] > 0 else 0]
            cube[r, c] = proto + rng.normal(0.0, noise, size=bands)

    class_names = [f"class_{i + 1}" for i in range(num_classes)]
    return HsiCube(reflectance=cube, labels=labels, class_names=class_names,
                   dataset_id="synthetic")
