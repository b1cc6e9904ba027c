import numpy as np
import pytest

from kflow._quadrature import cell_pair_cubature, cell_pair_radial
from kflow.kernel import (
    InteractionTable,
    build_compact_kernel,
    build_fractional_kernel,
    load_table,
    save_table,
    top_hat,
    validate_kernel,
)


def test_radial_symmetry(frac8):
    assert frac8.weight((1, 0)) == frac8.weight((0, -1))


def test_far_offset_near_midpoint(frac8):
    assert frac8.weight((5, 0)) == pytest.approx(5**-2.5, rel=0.02)


def test_midpoint_error_at_five_cells():
    # exact cell-pair mass at |v| = 5 against the midpoint value used in the far field
    exact = cell_pair_radial(lambda r: r**-1.5, np.array([5.0, 0.0]), 1.0, 1e-12)
    mid = 5**-2.5
    assert abs(mid - exact) / exact == pytest.approx(0.0208, abs=5e-4)


def test_tail_closed_form(frac8):
    assert frac8.tail == pytest.approx(2 * np.pi / (0.5 * 8**0.5), rel=1e-14)


def test_tail_against_numeric_integral():
    from scipy.integrate import quad

    R = 8.0
    num, _ = quad(lambda r: 2 * np.pi * r * r**-2.5, R, np.inf)
    t = build_fractional_kernel(2, 0.5, 1.0, R)
    assert t.tail == pytest.approx(num, rel=1e-8)


def test_near_field_quadrature_methods_agree():
    v = np.array([1.0, 1.0])
    a = cell_pair_radial(lambda r: r**-1.5, v, 1.0, 1e-12)
    b = cell_pair_cubature(lambda r: r**-2.5, v, 1.0, 1e-11)
    assert a == pytest.approx(b, rel=1e-8)


def test_fractional_rejects_bad_args():
    with pytest.raises(ValueError):
        build_fractional_kernel(2, 1.0, 1.0, 8.0)
    with pytest.raises(ValueError):
        build_fractional_kernel(2, 0.0, 1.0, 8.0)
    with pytest.raises(ValueError):
        build_fractional_kernel(2, 0.5, 1.0, 2.0)


def test_decreasing_along_rays(frac8):
    for d in [(1, 0), (1, 1), (2, 1)]:
        vals = [frac8.weight((k * d[0], k * d[1])) for k in range(1, 20) if np.hypot(*d) * k <= 8]
        assert all(b < a for a, b in zip(vals, vals[1:]))


def test_top_hat_support(hat2):
    norms = np.hypot(*hat2.offsets.T)
    assert norms.max() <= 2.0
    assert hat2.tail == 0.0


def test_top_hat_exact_overlap():
    # support 3 covers every pair of points in two unit cells at offset 1
    t = build_compact_kernel(2, top_hat(3.0), 1.0)
    assert t.weight((1, 0)) == pytest.approx(1.0, rel=1e-9)


def test_degenerate_and_negative_profiles():
    from kflow.kernel import RadialProfile

    with pytest.raises(ValueError):
        build_compact_kernel(2, top_hat(2.0, 0.0), 1.0)
    neg = RadialProfile(lambda r: 1.0 - r, 2.0)
    with pytest.raises(ValueError):
        build_compact_kernel(2, neg, 1.0)


def test_validate_passes_for_built(frac8, hat2):
    assert validate_kernel(frac8).passed
    assert validate_kernel(hat2).passed


def test_validate_flags_asymmetry_and_sign():
    off = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    t = InteractionTable(2, 1.0, 1.0, off, [1.0, 2.0, 1.0, 1.0])
    rep = validate_kernel(t)
    assert not rep["symmetry"].passed
    assert rep["symmetry"].offset in {(1, 0), (-1, 0)}
    t = InteractionTable(2, 1.0, 1.0, off, [1.0, 1.0, -1.0, -1.0])
    assert not validate_kernel(t)["nonnegativity"].passed


def test_other_dimensions():
    t1 = build_fractional_kernel(1, 0.5, 1.0, 6.0)
    t3 = build_fractional_kernel(3, 0.5, 1.0, 3.0)
    assert validate_kernel(t1).passed and validate_kernel(t3).passed
    assert t3.weight((1, 0, 0)) == t3.weight((0, 0, -1))


def test_save_load_roundtrip(tmp_path, frac8):
    p = tmp_path / "k.bin"
    save_table(frac8, p)
    back = load_table(p)
    assert np.array_equal(back.offsets, frac8.offsets)
    assert np.array_equal(back.weights, frac8.weights)
    assert back.tail == frac8.tail and back.exponent == frac8.exponent
    assert (tmp_path / "k.bin.txt").read_text().strip()
