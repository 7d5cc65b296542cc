import numpy as np
import pytest

from phsmg.harness import ManufacturedCase, build_problem, level_pointset
from phsmg.pointset import DIRICHLET, NEUMANN
from phsmg.rbf import monomials
from phsmg.transfer import (
    PROLONGATION,
    RESTRICTION,
    build_transfer,
    extension_matrix,
    interpolation_matrix,
)

CASE = ManufacturedCase(1)


def problems(geom="square_with_hole", bc="dirichlet"):
    return [build_problem(level_pointset(geom, lvl, bc), CASE, 3) for lvl in (2, 3)]


def test_interpolation_matrix_reproduces_cubics():
    rng = np.random.default_rng(0)
    src, dst = rng.random((400, 2)), rng.random((150, 2))
    M = interpolation_matrix(src, dst, degree=3)
    assert M.shape == (150, 400)
    assert np.all(np.diff(M.indptr) == 20)
    assert np.allclose(M @ monomials(src, 3), monomials(dst, 3), atol=1e-10)
    assert np.allclose(M.sum(axis=1), 1.0, atol=1e-12)


def test_interpolation_at_source_points_is_identity():
    rng = np.random.default_rng(1)
    src = rng.random((100, 2))
    M = interpolation_matrix(src, src[:10], degree=2, n_members=12)
    assert np.allclose(M.toarray()[:, :10], np.eye(10), atol=1e-10)


def test_transfer_cloud_too_large():
    with pytest.raises(ValueError):
        interpolation_matrix(np.random.default_rng(0).random((10, 2)), np.zeros((1, 2)))


@pytest.mark.parametrize("bc", ["dirichlet", "all_neumann"])
def test_shapes_and_directions(bc):
    coarse, fine = problems(bc=bc)
    R = build_transfer(fine, coarse)
    P = build_transfer(coarse, fine)
    assert R.direction == RESTRICTION and P.direction == PROLONGATION
    assert R.shape == (coarse.n, fine.n) and P.shape == (fine.n, coarse.n)
    assert (R @ np.ones(fine.n)).shape == (coarse.n,)
    with pytest.raises(ValueError):
        build_transfer(fine, coarse, direction="sideways")


def test_extension_matrix_rows():
    coarse, _ = problems(bc="dirichlet")
    E = extension_matrix(coarse, PROLONGATION).toarray()
    assert np.array_equal(E[coarse.unknowns], np.eye(coarse.n))
    assert np.all(E[coarse.dirichlet_points] == 0.0)
    coarse, _ = problems(bc="all_neumann")
    for direction in (RESTRICTION, PROLONGATION):
        E = extension_matrix(coarse, direction).toarray()
        nb = E[coarse.neumann_points]
        if direction == RESTRICTION:
            assert np.all(nb == 0.0)
        else:
            assert np.allclose(nb, coarse.recovery.toarray())


def test_prolongated_neumann_correction_uses_recovery():
    # a constant correction extends to a constant at the boundary, so the
    # prolongation reproduces it exactly
    coarse, fine = problems(bc="all_neumann")
    P = build_transfer(coarse, fine, direction=PROLONGATION)
    assert np.allclose(P @ np.ones(coarse.n), 1.0, atol=1e-9)


def test_boundary_inclusive_interpolation_reproduces_cubics():
    coarse, fine = problems()
    for src, dst in ((fine, coarse), (coarse, fine)):
        op = build_transfer(src, dst, degree=3)
        got = op.interpolation @ monomials(src.pointset.points, 3)
        assert np.allclose(got, monomials(dst.coords, 3), atol=1e-9)
        inner = build_transfer(src, dst, degree=3, include_boundary=False)
        assert np.allclose(inner @ monomials(src.coords, 3), monomials(dst.coords, 3), atol=1e-9)


def test_transfers_are_deterministic():
    coarse, fine = problems("annulus")
    a = build_transfer(fine, coarse).matrix
    b = build_transfer(fine, coarse).matrix
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.data, b.data)
