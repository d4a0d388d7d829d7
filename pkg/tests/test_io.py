"""Volume file format, Beer-Lambert normalization, phantom, and metrics."""

import math
import struct

import numpy as np
import pytest

from sptomo import (FileFormatError, InvalidFlatFieldError, ShapeMismatchError,
                    compute_metrics, normalize, phantom_shepp_logan, read_volume,
                    simulate_intensity, snr, write_volume)
from sptomo.io import (KIND_INTENSITY, KIND_SINOGRAM, KIND_TOMOGRAM, VOLUME_MAGIC,
                       sinogram_geometry)


def _sino_stack(n_z=3, n_theta=5, n_p=8, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n_z, n_theta, n_p)).astype(np.float32)
    angles = np.linspace(0.0, np.pi, n_theta, endpoint=False)
    return data, angles


# ---------------------------------------------------------------- format


def test_volume_roundtrip_bit_identical(tmp_path):
    path = str(tmp_path / "s.vol")
    data, angles = _sino_stack()
    write_volume(path, KIND_SINOGRAM, data, center=4.25, angles=angles)
    vol = read_volume(path)
    assert vol.kind == KIND_SINOGRAM
    assert vol.center == 4.25
    np.testing.assert_array_equal(vol.data, data)
    np.testing.assert_array_equal(vol.angles, angles)


def test_volume_2d_payload_promoted(tmp_path):
    path = str(tmp_path / "s.vol")
    data, angles = _sino_stack(n_z=1)
    write_volume(path, KIND_SINOGRAM, data[0], angles=angles)
    assert read_volume(path).data.shape == data.shape


def test_tomogram_drops_angle_table(tmp_path):
    path = str(tmp_path / "t.vol")
    data, angles = _sino_stack()
    write_volume(path, KIND_TOMOGRAM, data, angles=angles)
    vol = read_volume(path)
    assert vol.kind == KIND_TOMOGRAM
    assert vol.angles is None


def test_write_rejects_bad_inputs(tmp_path):
    data, angles = _sino_stack()
    with pytest.raises(ValueError):
        write_volume(str(tmp_path / "x.vol"), KIND_SINOGRAM, data, angles=None)
    with pytest.raises(ValueError):
        write_volume(str(tmp_path / "x.vol"), 7, data, angles=angles)
    with pytest.raises(ShapeMismatchError):
        write_volume(str(tmp_path / "x.vol"), KIND_TOMOGRAM, data[None])


def _valid_file_bytes(tmp_path):
    path = str(tmp_path / "v.vol")
    data, angles = _sino_stack()
    write_volume(path, KIND_SINOGRAM, data, angles=angles)
    with open(path, "rb") as fh:
        return path, bytearray(fh.read())


@pytest.mark.parametrize("mangle,label", [
    (lambda b: b"XXXX" + bytes(b[4:]), "magic"),
    (lambda b: bytes(b[:8]) + struct.pack("<I", 99) + bytes(b[12:]), "version"),
    (lambda b: bytes(b[:12]) + bytes([9]) + bytes(b[13:]), "kind"),
    (lambda b: bytes(b[:-7]), "truncated"),
    (lambda b: bytes(b) + b"\x00", "trailing"),
])
def test_corrupt_volume_rejected(tmp_path, mangle, label):
    path, raw = _valid_file_bytes(tmp_path)
    with open(path, "wb") as fh:
        fh.write(mangle(raw))
    with pytest.raises(FileFormatError):
        read_volume(path)


def test_angle_count_mismatch_rejected(tmp_path):
    # handcrafted header claims 5 angle columns but carries a 3-entry table
    path = str(tmp_path / "bad.vol")
    with open(path, "wb") as fh:
        fh.write(VOLUME_MAGIC)
        fh.write(struct.pack("<IB3QdQ", 1, KIND_SINOGRAM, 1, 5, 4, 2.0, 3))
        fh.write(np.zeros(3, dtype="<f8").tobytes())
        fh.write(np.zeros(1 * 5 * 4, dtype="<f4").tobytes())
    with pytest.raises(FileFormatError):
        read_volume(path)


# ---------------------------------------------------------------- normalize


def test_normalize_unit_transmission_is_zero():
    intensity = np.full((2, 4, 4), 3.7)
    np.testing.assert_array_equal(normalize(intensity, 3.7), 0.0)


def test_normalize_single_mean_free_path():
    flat = 2.0
    got = normalize(np.full((1, 3, 3), flat * math.exp(-1.0)), flat)
    np.testing.assert_allclose(got, 1.0, atol=1e-12)


def test_normalize_inverts_simulated_intensity():
    sino = phantom_shepp_logan(16) * 4.0
    flat = 1.5e4
    back = normalize(simulate_intensity(sino, flat=flat), flat)
    np.testing.assert_allclose(back, sino, atol=1e-6)


@pytest.mark.parametrize("flat", [0.0, -1.0, np.inf, np.nan])
def test_normalize_rejects_bad_flat_scalar(flat):
    with pytest.raises(InvalidFlatFieldError):
        normalize(np.ones((1, 2, 2)), flat)


def test_normalize_rejects_bad_flat_array():
    flat = np.ones((1, 2, 2))
    flat[0, 1, 1] = 0.0
    with pytest.raises(InvalidFlatFieldError):
        normalize(np.ones((1, 2, 2)), flat)


def test_normalize_clamps_zero_counts():
    intensity = np.array([[[1.0, 0.0]]])
    out = normalize(intensity, 1.0)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out[0, 0, 1], -math.log(1e-9), atol=1e-12)


def test_normalize_rejects_dark_stack():
    with pytest.raises(InvalidFlatFieldError):
        normalize(np.zeros((1, 2, 2)), 1.0)


def test_simulate_intensity_zero_absorption():
    np.testing.assert_array_equal(simulate_intensity(np.zeros((2, 3)), flat=7.0), 7.0)


# ---------------------------------------------------------------- phantom


def test_phantom_support_and_range():
    n = 64
    img = phantom_shepp_logan(n)[0]
    assert img.min() >= 0.0 and img.max() <= 1.0
    x = (np.arange(n) - n / 2.0) / (n / 2.0)
    xx, yy = np.meshgrid(x, x, indexing="xy")
    outside = (xx / 0.69) ** 2 + (yy / 0.92) ** 2 > 1.0
    np.testing.assert_array_equal(img[outside], 0.0)


def test_phantom_nonzero_fraction():
    img = phantom_shepp_logan(64)[0]
    frac = np.count_nonzero(img) / img.size
    assert 0.40 <= frac <= 0.75


def test_phantom_slice_scaling():
    stack = phantom_shepp_logan(32, n_z=3)
    assert stack.shape == (3, 32, 32)
    np.testing.assert_array_equal(stack[1], stack[0] * 0.9)
    np.testing.assert_array_equal(stack[2], stack[0] * 0.8)


# ---------------------------------------------------------------- metrics


def test_snr_exact_match_is_inf():
    img = phantom_shepp_logan(16)[0]
    assert snr(img, img) == math.inf
    assert snr(2.0 * img, img) == math.inf  # scalar fit removes pure scaling


def test_snr_hand_value():
    # ref=(3,4), rec=(4,3): best fit s=24/25, residual^2=1.96
    got = snr(np.array([4.0, 3.0]), np.array([3.0, 4.0]))
    np.testing.assert_allclose(got, 10 * math.log10(25.0 / 1.96), atol=1e-12)


def test_snr_matches_lstsq_fit():
    rng = np.random.default_rng(5)
    for _ in range(5):
        ref = rng.standard_normal((12, 12))
        rec = ref + 0.3 * rng.standard_normal((12, 12))
        s = np.linalg.lstsq(rec.reshape(-1, 1), ref.reshape(-1), rcond=None)[0][0]
        want = 10 * math.log10(np.linalg.norm(ref) ** 2
                               / np.linalg.norm(ref - s * rec) ** 2)
        np.testing.assert_allclose(snr(rec, ref), want, atol=1e-9)


def test_snr_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        snr(np.ones((2, 2)), np.ones((3, 3)))


def test_metrics_residual_matches_snr():
    rng = np.random.default_rng(6)
    ref = rng.standard_normal((10, 10))
    rec = ref + 0.1 * rng.standard_normal((10, 10))
    m = compute_metrics(rec, ref)
    np.testing.assert_allclose(m.residual, 10 ** (-m.snr_db / 20.0), atol=1e-12)
    m2 = compute_metrics(ref, ref)
    assert m2.snr_db == math.inf and m2.residual == 0.0


# ---------------------------------------------------------------- geometry


def test_sinogram_geometry_from_header(tmp_path):
    path = str(tmp_path / "s.vol")
    data, angles = _sino_stack(n_z=2, n_theta=7, n_p=16)
    write_volume(path, KIND_INTENSITY, data, center=8.5, angles=angles)
    geom = sinogram_geometry(read_volume(path))
    assert (geom.n_p, geom.n_theta, geom.n_z, geom.center) == (16, 7, 2, 8.5)
    np.testing.assert_allclose(geom.angles, angles)


def test_sinogram_geometry_rejects_tomogram(tmp_path):
    path = str(tmp_path / "t.vol")
    write_volume(path, KIND_TOMOGRAM, np.zeros((1, 4, 4), dtype=np.float32))
    with pytest.raises(ValueError):
        sinogram_geometry(read_volume(path))
