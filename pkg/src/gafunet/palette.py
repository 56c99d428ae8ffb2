"""Deterministic class-color palettes for classification maps."""

import colorsys

import numpy as np


def make_palette(num_classes, seed=0, background=(0, 0, 0)):
    """C distinct RGB triples plus a background color for label 0.

    Hues are evenly spaced (guaranteeing distinctness) and shuffled with
    the seed so adjacent class indices get contrasting colors.
    """
    rng = np.random.default_rng(seed)
    hues = np.arange(num_classes) / num_classes
    order = rng.permutation(num_classes)
    colors = []
    for i in order:
        r, g, b = colorsys.hsv_to_rgb(float(hues[i]), 0.85, 0.95)
        colors.append((int(r * 255), int(g * 255), int(b * 255)))
    return {"background": tuple(background), "classes": colors}


def render_label_map(label_map, palette, mask_unlabeled=False, reference_labels=None):
    """Map an H x W array of labels in [0, C] to an H x W x 3 uint8 image.

    With ``mask_unlabeled``, positions where ``reference_labels`` is 0 are
    painted the background color regardless of the predicted label.
    """
    labels = np.asarray(label_map)
    h, w = labels.shape
    lut = np.array([palette["background"]] + palette["classes"], dtype=np.uint8)
    img = lut[labels.reshape(-1)].reshape(h, w, 3)
    if mask_unlabeled:
        if reference_labels is None:
            raise ValueError("mask_unlabeled requires reference_labels")
        img[np.asarray(reference_labels) == 0] = palette["background"]
    return img
