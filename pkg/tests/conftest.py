import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

sys.path.insert(0, str(Path(__file__).parent))

from lesionlens.imgio import RasterImage, Tensor, write_image, write_tensor  # noqa: E402
from lesionlens.segmentation import LesionMask, fill_holes, largest_component  # noqa: E402


def disk_bits(size=256, radius=40, center=None):
    cy, cx = center if center is not None else (size // 2, size // 2)
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius


def disk_image(size=256, radius=40, lesion=(90, 60, 40), skin=(220, 190, 170)):
    bits = disk_bits(size, radius)
    arr = np.empty((size, size, 3), dtype=np.uint8)
    arr[:] = skin
    arr[bits] = lesion
    return RasterImage.from_array(arr), bits


def random_mask(rng, size=16, smooth=None):
    """A valid LesionMask built from random noise: largest component, holes filled."""
    while True:
        noise = rng.random((size, size))
        if smooth:
            noise = ndimage.gaussian_filter(noise, smooth)
            bits = noise > np.median(noise)
        else:
            bits = noise < 0.6
        if bits.any():
            return LesionMask.from_bits(fill_holes(largest_component(bits)))


def save_image(tmp_path, name, arr):
    path = tmp_path / name
    write_image(RasterImage.from_array(arr), path)
    return str(path)


def save_tensor(tmp_path, name, arr):
    path = tmp_path / name
    write_tensor(Tensor.from_array(np.asarray(arr, dtype=np.float32)), path)
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
