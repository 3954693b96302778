import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from numpy.testing import assert_allclose, assert_array_equal

from osbpd.assembly import (
    assemble_operators,
    bond_based_stiffness,
    break_bonds,
    compose_stiffness,
    write_matrix_market,
)
from osbpd.discretize import DiscreteModel, NodeSet, build_model
from osbpd.kernels import ForceKernel, KernelMode
from osbpd.material import DimensionMode, PdConstants, derive_pd_constants

from conftest import square_model


def reference_force(model, c, U, intact):
    """Pure numpy statement of the pairwise force law, independent of the operators."""
    d = model.dim
    i, j = model.bonds.pairs.T
    M, x, V, m = model.bonds.direction, model.bonds.length, model.nodes.volume, model.m
    u = U.reshape(-1, d)
    e = np.einsum("bk,bk->b", M, u[j] - u[i]) * intact
    theta = np.zeros(model.n_nodes)
    np.add.at(theta, i, c.A * x * e * V[j])
    np.add.at(theta, j, c.A * x * e * V[i])
    theta /= m
    f = ((c.K - c.G / 3) * (theta[i] / m[i] + theta[j] / m[j]) * x
         + c.G * e * (1 / m[i] + 1 / m[j])) * V[i] * V[j] * intact
    F = np.zeros_like(u)
    np.add.at(F, i, f[:, None] * M)
    np.add.at(F, j, -f[:, None] * M)
    return F.ravel()


def two_node_model():
    nodes = NodeSet(np.array([[0.0, 0.0, 0.0], [0.6, 0.0, 0.8]]), np.ones(2), 1.0,
                    DimensionMode.THREE_D)
    return build_model(nodes, 1.0)


class TestAssemble:
    def test_shapes_10x10_grid(self, system2d):
        model, _, ops = system2d
        assert ops.Ce.shape == (1058, 200)
        assert ops.Ctheta.shape == (100, 1058)
        assert ops.Ktheta.shape == (200, 100)
        assert ops.Ke.shape == (200, 1058)

    def test_single_bond_ce_row(self):
        model = two_node_model()
        c = PdConstants(3.0, 1.0, 1.0, DimensionMode.THREE_D)
        ops = assemble_operators(model, c)
        assert_allclose(ops.Ce.toarray(), [[-0.6, 0.0, -0.8, 0.6, 0.0, 0.8]], rtol=1e-15)

    def test_nonzero_patterns(self, system3d):
        model, _, ops = system3d
        d = model.dim
        assert_array_equal(np.diff(ops.Ce.indptr), 2 * d)
        assert_array_equal(np.diff(ops.Ke.tocsc().indptr), 2 * d)
        assert_array_equal(np.diff(ops.Ctheta.tocsc().indptr), 2)

    def test_entry_maps_cover_nonzeros(self, system2d):
        model, _, ops = system2d
        for name, slots in (("Ce", ops.ce_slots), ("Ctheta", ops.ctheta_slots),
                            ("Ke", ops.ke_slots)):
            flat = np.sort(slots.ravel())
            assert_array_equal(flat, np.arange(getattr(ops, name).nnz), err_msg=name)
        assert_array_equal(np.unique(ops.ktheta_slots), np.arange(ops.Ktheta.nnz))

    def test_volume_homogeneity(self, soft):
        c = derive_pd_constants(soft, DimensionMode.PLANE_STRAIN)
        base = square_model(thickness=1.0)
        a = assemble_operators(base, c)
        # m follows the volumes: V_i V_j / m scales once, V_j / m_i is invariant
        b = assemble_operators(square_model(thickness=2.0), c)
        assert_allclose(b.Ktheta.data, 2.0 * a.Ktheta.data, rtol=1e-13)
        assert_allclose(b.Ke.data, 2.0 * a.Ke.data, rtol=1e-13)
        assert_allclose(b.Ctheta.data, a.Ctheta.data, rtol=1e-14)
        # m frozen: the V_i V_j products scale twice
        nodes = NodeSet(base.nodes.x, 2.0 * base.nodes.volume, base.nodes.dx, base.mode)
        frozen = DiscreteModel(nodes, base.bonds, base.m, base.delta)
        f = assemble_operators(frozen, c)
        assert_allclose(f.Ktheta.data, 4.0 * a.Ktheta.data, rtol=1e-13)
        assert_allclose(f.Ke.data, 4.0 * a.Ke.data, rtol=1e-13)

    def test_force_matches_independent_formula(self, system2d, rng):
        model, c, ops = system2d
        U = rng.standard_normal(model.n_dofs)
        F = ForceKernel(model, ops, c).evaluate(U).F
        ref = reference_force(model, c, U, np.ones(model.n_bonds))
        assert_allclose(F, ref, rtol=0, atol=1e-12 * np.abs(ref).max())


class TestStiffness:
    def test_matches_matvec(self, system3d, rng):
        model, c, ops = system3d
        K = compose_stiffness(ops)
        kern = ForceKernel(model, ops, c)
        for _ in range(100):
            U = rng.standard_normal(model.n_dofs)
            F = kern(U)
            assert np.abs(K @ U - F).max() <= 1e-12 * np.abs(F).max()

    @pytest.mark.parametrize("fixture", ["system2d", "system3d"])
    def test_symmetric_and_translation_null(self, fixture, request):
        model, _, ops = request.getfixturevalue(fixture)
        K = compose_stiffness(ops)
        scale = np.abs(K.data).max()
        assert abs(K - K.T).max() <= 1e-10 * scale
        assert np.abs(np.asarray(K.sum(axis=1))).max() <= 1e-10 * scale

    def test_negative_semidefinite(self, system2d):
        K = compose_stiffness(system2d[2]).toarray()
        w = np.linalg.eigvalsh(0.5 * (K + K.T))
        assert w.max() <= 1e-10 * np.abs(w).max()

    def test_wider_than_bond_based(self, system2d):
        model, _, ops = system2d
        assert compose_stiffness(ops).nnz > bond_based_stiffness(model).nnz

    def test_columns_match_loop_jacobian(self, system2d):
        model, c, ops = system2d
        K = compose_stiffness(ops).toarray()
        loop = ForceKernel(model, ops, c, KernelMode.LOOP_LINEARIZED)
        for k in (0, 37, 101, 199):
            unit = np.zeros(model.n_dofs)
            unit[k] = 1.0
            assert_allclose(K[:, k], loop(unit), rtol=0, atol=1e-12 * np.abs(K).max())


class TestBreakBonds:
    def test_break_all_gives_zero_force(self, system2d, rng):
        model, c, ops = system2d
        break_bonds(ops, np.arange(model.n_bonds))
        F = ForceKernel(model, ops, c)(rng.standard_normal(model.n_dofs))
        assert_array_equal(F, 0.0)
        assert compose_stiffness(ops).count_nonzero() == 0

    def test_two_node_model(self):
        model = two_node_model()
        ops = assemble_operators(model, PdConstants(3.0, 5.0, 2.0, DimensionMode.THREE_D))
        assert compose_stiffness(ops).count_nonzero() > 0
        break_bonds(ops, [0])
        assert compose_stiffness(ops).count_nonzero() == 0

    def test_idempotent(self, system2d):
        _, _, ops = system2d
        first = break_bonds(ops, [3, 7, 7])
        assert_array_equal(first, [3, 7])
        before = (ops.Ce.data.copy(), ops.Ktheta.data.copy())
        assert break_bonds(ops, [7]).size == 0
        assert_array_equal(ops.Ce.data, before[0])
        assert_array_equal(ops.Ktheta.data, before[1])

    def test_sparsity_retained(self, system2d):
        _, _, ops = system2d
        nnz = (ops.Ce.nnz, ops.Ktheta.nnz)
        break_bonds(ops, np.arange(0, 1058, 3))
        assert (ops.Ce.nnz, ops.Ktheta.nnz) == nnz

    @pytest.mark.parametrize("fixture", ["system2d", "system3d"])
    def test_equals_fresh_assembly(self, fixture, request, rng):
        model, c, ops = request.getfixturevalue(fixture)
        broken = rng.choice(model.n_bonds, size=model.n_bonds // 10, replace=False)
        for chunk in np.array_split(broken, 4):
            break_bonds(ops, chunk)
        intact = np.ones(model.n_bonds, dtype=bool)
        intact[broken] = False
        fresh = assemble_operators(model, c, intact=intact)
        K1, K2 = compose_stiffness(ops), compose_stiffness(fresh)
        assert abs(K1 - K2).max() <= 1e-14
        assert_array_equal(ops.Ktheta.data, fresh.Ktheta.data)
        scale = np.abs(K1.data).max()
        assert abs(K1 - K1.T).max() <= 1e-10 * scale


def test_matrix_market_dump(tmp_path, system2d):
    _, _, ops = system2d
    paths = write_matrix_market(ops, tmp_path)
    assert [p.name for p in paths] == ["Ce.mtx", "Ctheta.mtx", "Ktheta.mtx", "Ke.mtx"]
    back = sp.csr_matrix(scipy.io.mmread(str(paths[2])))
    assert abs(back - ops.Ktheta).max() == 0.0


def test_abs_rowsum_bounds_exact(system3d):
    from osbpd.assembly import stiffness_abs_rowsum
    _, _, ops = system3d
    exact = stiffness_abs_rowsum(ops, exact=True)
    bound = stiffness_abs_rowsum(ops)
    K = compose_stiffness(ops)
    assert_allclose(exact, np.asarray(abs(K).sum(axis=1)).ravel())
    assert np.all(bound >= exact * (1 - 1e-12))
    assert np.all(bound <= 10 * exact)
