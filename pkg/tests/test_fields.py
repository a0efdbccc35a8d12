import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orlicz_lab.errors import GridTooCoarseError, ParameterError
from orlicz_lab.fields import (BallGrid, ScalarField, axis_permuted, dump_field, hessian_fd, lattice_offsets,
                               load_field, narrow_bump_field, random_bandlimited_field, read_field_csv,
                               smooth_step, stencil_valid_mask, write_field_csv)


def test_grid_basics():
    g = BallGrid(2, 65)
    assert g.h == pytest.approx(2 / 64)
    assert g.axis[g.center_index[0]] == 0.0
    assert g.inside_mask.sum() == np.count_nonzero(g.radius < 1)
    with pytest.raises(ParameterError):
        BallGrid(2, 64)
    with pytest.raises(ParameterError):
        BallGrid(4, 65)


def test_field_zero_off_mask_and_read_only():
    g = BallGrid(2, 33)
    f = ScalarField(g, np.ones(g.shape))
    assert np.all(f.values[~g.inside_mask] == 0)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(ParameterError):
        ScalarField(g, np.full(g.shape, np.nan))


def test_hessian_exact_on_quadratics():
    g = BallGrid(2, 65)
    u = ScalarField.from_function(g, lambda x, y: 3 * x * x - 2 * x * y + 0.5 * y * y)
    H = hessian_fd(u)
    v = H.valid
    assert np.allclose(H.components[0, 0][v], 6.0)
    assert np.allclose(H.components[0, 1][v], -2.0)
    assert np.allclose(H.components[1, 0][v], -2.0)
    assert np.allclose(H.components[1, 1][v], 1.0)
    assert np.allclose(H.abs_sum.values[v], 11.0)
    assert np.allclose(H.laplacian.values[v], 7.0)


def test_hessian_3d_quadratic():
    g = BallGrid(3, 21)
    u = ScalarField.from_function(g, lambda x, y, z: x * z + y * y)
    H = hessian_fd(u)
    v = H.valid
    assert np.allclose(H.abs_sum.values[v], 4.0)


def test_abs_sum_of_paraboloid_is_one():
    g = BallGrid(2, 129)
    u = ScalarField.from_function(g, lambda x, y: (1 - x * x - y * y) / 4)
    H = hessian_fd(u)
    assert np.allclose(H.abs_sum.values[H.valid], 1.0)


def test_valid_mask_margin():
    g = BallGrid(2, 65)
    one = stencil_valid_mask(g, margin=1)
    two = stencil_valid_mask(g, margin=2)
    assert two.sum() < one.sum() < g.inside_mask.sum()
    assert not np.any(two & ~one)
    with pytest.raises(GridTooCoarseError):
        hessian_fd(ScalarField(BallGrid(2, 3), np.zeros((3, 3))))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_hessian_commutes_with_axis_swap(seed):
    g = BallGrid(2, 33)
    u = random_bandlimited_field(g, 3, seed)
    H = hessian_fd(u)
    Hs = hessian_fd(axis_permuted(u, (1, 0)))
    assert np.allclose(Hs.abs_sum.values, H.abs_sum.values.T, atol=1e-12)
    assert np.allclose(Hs.components[0, 0], H.components[1, 1].T, atol=1e-12)


def test_random_field_properties():
    g = BallGrid(2, 129)
    f = random_bandlimited_field(g, 4, 7)
    assert f.max_abs() == pytest.approx(1.0)
    assert np.all(f.values[g.radius >= 0.9] == 0)
    f2 = random_bandlimited_field(g, 4, 7)
    assert np.array_equal(f.values, f2.values)
    # same continuous function on a coarser grid: the shared nodes agree up to normalization
    c = random_bandlimited_field(BallGrid(2, 65), 4, 7)
    ratio = f.values[::2, ::2][c.values != 0] / c.values[c.values != 0]
    assert np.allclose(ratio, ratio[0])
    with pytest.raises(ParameterError):
        random_bandlimited_field(g, 0, 1)


def test_narrow_bumps_resolution_independent():
    a = narrow_bump_field(BallGrid(2, 129), 3, 5)
    b = narrow_bump_field(BallGrid(2, 65), 3, 5)
    assert np.allclose(a.values[::2, ::2], b.values)


def test_smooth_step_limits():
    s = np.linspace(-1, 2, 301)
    v = smooth_step(s)
    assert np.all(v[s <= 0] == 1.0) and np.all(v[s >= 1] == 0.0)
    assert np.all(np.diff(v) <= 0)
    assert smooth_step(0.5) == pytest.approx(0.5)


def test_csv_and_binary_round_trip(tmp_path):
    g = BallGrid(2, 33)
    f = random_bandlimited_field(g, 3, 1)
    write_field_csv(f, tmp_path / "f.csv")
    back = read_field_csv(tmp_path / "f.csv", g)
    assert np.array_equal(back.values, f.values)
    dump_field(f, tmp_path / "f.bin")
    raw = (tmp_path / "f.bin").read_bytes()
    assert np.frombuffer(raw[:16], "<i8").tolist() == [2, 33]
    assert np.array_equal(load_field(tmp_path / "f.bin").values, f.values)


def test_lattice_offsets_strict():
    offs = lattice_offsets(2.0, 2)
    d = np.sqrt((offs**2).sum(axis=1))
    assert d.max() < 2.0
    assert len(offs) == 9  # (0,0), four at 1, four at sqrt 2
