import numpy as np
import pytest

from coacs.grid import hann_window
from coacs.preview import TRANSFORMS, read_pgm, render_preview, to_uint8


def test_linear_extremes():
    img = to_uint8(np.array([[0.0, 1.0], [2.0, 4.0]]))
    assert img.dtype == np.uint8
    assert img[0, 0] == 0 and img[1, 1] == 255 and img[0, 1] == 64


def test_constant_is_mid_gray():
    assert np.all(to_uint8(np.full((3, 3), 7.0), "log") == 128)


def test_log_spaces_decades_evenly():
    img = to_uint8(np.array([[1.0, 10.0], [100.0, 100.0]]), "log")
    np.testing.assert_array_equal(img, [[0, 128], [255, 255]])


def test_log_floors_non_positive():
    img = to_uint8(np.array([[-5.0, 0.0], [1.0, 100.0]]), "log")
    assert img[0, 0] == img[0, 1] == img[1, 0] == 0 and img[1, 1] == 255


def test_derooted_undoes_window():
    w = hann_window(16, 1e-3, sym=False)
    signal = 10.0 ** np.add.outer(np.arange(16), np.arange(16)) / 4.0
    img = to_uint8(signal * w.intensity, "derooted-window", window=w)
    np.testing.assert_array_equal(img, to_uint8(signal, "log"))


def test_complex_uses_modulus():
    a = np.array([[1.0, -2.0], [3.0, 0.0]])
    np.testing.assert_array_equal(to_uint8(a * 1j), to_uint8(np.abs(a)))


def test_unknown_transform():
    with pytest.raises(ValueError):
        to_uint8(np.ones((2, 2)), "gamma")


@pytest.mark.parametrize("transform", TRANSFORMS)
def test_pgm_round_trip(tmp_path, rng, transform):
    grid = rng.random((9, 9)) + 0.01
    path = render_preview(grid, transform, tmp_path / "sub" / "p.pgm")
    assert path.read_bytes().startswith(b"P5\n9 9\n255\n")
    np.testing.assert_array_equal(read_pgm(path), to_uint8(grid, transform))


def test_rejects_non_pgm(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pgm(p)
