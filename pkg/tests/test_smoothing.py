import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from auxamg.blocksparse import BlockSparseMatrix
from auxamg.coarsening import CoarseningParams, successive_matching
from auxamg.problems import make_problem
from auxamg.smoothing import (CLASS_A, CLASS_D, CLASS_S, SmoothingParams, batched_pinv, build_filtered_aux,
                              filtered_neighbors, restrict_rows, smooth_prolongation)
from auxamg.topology import (Agglomeration, assemble_aux_matrix, coarsen_topology, rigid_modes,
                             tentative_prolongation)

from helpers import path_topology

seeds = st.integers(0, 2**32 - 1)


def setup(name, n, dirichlet=None, sigma=None, rounds=2, **kw):
    pr = make_problem(name, n, dirichlet=dirichlet, **kw)
    topo = pr.topology
    sigma = sigma or (20.0 if topo.kind == "scalar" else 80.0)
    agg = successive_matching(topo, CoarseningParams(sigma=sigma, rounds=rounds))
    return pr, topo, agg, tentative_prolongation(topo, agg)


def restrict_dim(topo):
    return topo.dim if topo.kind == "elasticity" else None


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            SmoothingParams(omega=1.5)
        with pytest.raises(ValueError):
            SmoothingParams(cap=-1)
        assert SmoothingParams(cap=3).row_limit == 3
        assert SmoothingParams(cap=3, standard_cap=7).row_limit == 7


class TestFilter:
    def test_strongest_first_with_mate(self):
        nbrs = np.array([1, 2, 3, 4, 5])
        traces = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
        vmap = np.array([0, 1, 1, 1, 1, 0])
        assert filtered_neighbors(0, nbrs, traces, 2, vmap) == [1, 5]
        vmap = np.array([0, 0, 1, 1, 1, 1])
        assert filtered_neighbors(0, nbrs, traces, 2, vmap) == [1, 2]
        assert filtered_neighbors(0, nbrs, traces, 0, vmap) == []

    def test_batched_pinv(self):
        rng = np.random.default_rng(0)
        g = rng.standard_normal((5, 4, 2))
        blocks = g @ g.transpose(0, 2, 1)
        out = batched_pinv(blocks)
        for b, bi in zip(blocks, out):
            assert np.allclose(bi, np.linalg.pinv(b, hermitian=True), atol=1e-8)


class TestFilteredAux:
    def test_classes_and_caps(self):
        pr, topo, agg, _ = setup("elasticity2d", 4)
        filt = build_filtered_aux(topo, pr.a, agg, SmoothingParams(cap=4))
        vmap = agg.vertex_map()
        assert np.all((filt.classes == CLASS_D) == (vmap < 0))
        indptr, nbrs, _ = topo.neighbors()
        for i, f in filt.filtered.items():
            assert filt.classes[i] == CLASS_A
            assert len(f) <= 4
            mates = [j for j in nbrs[indptr[i]:indptr[i + 1]] if vmap[j] == vmap[i]]
            if f and mates:
                assert any(vmap[j] == vmap[i] for j in f)
        d = filt.matrix.to_dense()
        k = topo.k
        for i in np.flatnonzero(filt.classes == CLASS_D):
            assert np.array_equal(d[i * k:(i + 1) * k], np.eye(topo.n_vertices * k)[i * k:(i + 1) * k])

    def test_short_scalar_row_is_copied(self):
        topo = path_topology(5)
        a = assemble_aux_matrix(topo)
        agg = Agglomeration.from_members([[0, 1], [2, 3], [4]], 5, fine_positions=topo.positions)
        filt = build_filtered_aux(topo, a, agg, SmoothingParams(cap=4))
        assert np.all(filt.classes == CLASS_S)
        assert np.array_equal(filt.matrix.to_dense(), a.to_dense())

    def test_class_a_rows_annihilate_kernel(self):
        pr, topo, agg, _ = setup("elasticity3d", 2, dirichlet=(), beam_length=1)
        filt = build_filtered_aux(topo, pr.a, agg, SmoothingParams(cap=3))
        modes = rigid_modes(topo)
        a0 = filt.matrix
        k = topo.k
        rows_a = np.flatnonzero(filt.classes == CLASS_A)
        assert rows_a.size
        for c in range(k):
            r = (a0 @ modes[:, c]).reshape(-1, k)[rows_a]
            assert np.abs(r).max() <= 1e-10 * np.abs(a0.blocks).max() * np.abs(modes).max()


class TestSmoothProlongation:
    def test_omega_zero(self):
        pr, topo, agg, p = setup("poisson2d", 6)
        filt = build_filtered_aux(topo, pr.a, agg, SmoothingParams())
        assert np.allclose(smooth_prolongation(filt, p, 0.0).to_dense(), p.to_dense())

    def test_cap_zero_keeps_tentative_on_aux_rows(self):
        pr, topo, agg, p = setup("elasticity2d", 4)
        filt = build_filtered_aux(topo, pr.a, agg, SmoothingParams(cap=0))
        ps = smooth_prolongation(filt, p, 2 / 3).to_dense()
        k = topo.k
        for i in np.flatnonzero(filt.classes == CLASS_A):
            assert np.allclose(ps[i * k:(i + 1) * k], p.to_dense()[i * k:(i + 1) * k])

    def test_1d_pairs_dense_formula(self):
        n = 8
        topo = path_topology(n, weight=4.0)
        a = assemble_aux_matrix(topo)
        agg = Agglomeration.from_members([[0, 1], [2, 3], [4, 5], [6, 7]], n, fine_positions=topo.positions)
        p = tentative_prolongation(topo, agg)
        filt = build_filtered_aux(topo, a, agg, SmoothingParams())
        dense = a.to_dense()
        ref = (np.eye(n) - 2 / 3 * np.diag(1 / np.diag(dense)) @ dense) @ p.to_dense()
        assert np.allclose(smooth_prolongation(filt, p, 2 / 3).to_dense(), ref, atol=1e-14)

    @pytest.mark.parametrize("name", ["poisson2d", "elasticity2d"])
    def test_classical_when_unfiltered(self, name):
        pr, topo, agg, p = setup(name, 4)
        filt = build_filtered_aux(topo, pr.a, agg, SmoothingParams(standard_cap=1000))
        assert np.all(filt.classes != CLASS_A)
        k, r = topo.k, (pr.a.block_shape[0])
        a = pr.a.to_dense()
        # pad the level matrix to k x k blocks, identity on dropped vertices
        n = topo.n_vertices
        big = np.zeros((n * k, n * k))
        for i in range(n):
            for j in range(n):
                big[i * k:i * k + r, j * k:j * k + r] = a[i * r:(i + 1) * r, j * r:(j + 1) * r]
        for i in np.flatnonzero(filt.classes == CLASS_D):
            big[i * k:(i + 1) * k] = 0.0
            big[i * k:(i + 1) * k, i * k:(i + 1) * k] = np.eye(k)
        dinv = np.zeros_like(big)
        for i in range(n):
            s = slice(i * k, (i + 1) * k)
            dinv[s, s] = np.linalg.pinv(big[s, s], hermitian=True, rcond=1e-10)
        ref = (np.eye(n * k) - 2 / 3 * dinv @ big) @ p.to_dense()
        out = smooth_prolongation(filt, p, 2 / 3).to_dense()
        assert np.abs(out - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())

    @pytest.mark.parametrize("name,n", [("poisson2d", 8), ("poisson3d", 4), ("elasticity2d", 3),
                                        ("elasticity3d", 2)])
    def test_kernel_exactness(self, name, n):
        pr, topo, agg, p = setup(name, n, dirichlet=())
        filt = build_filtered_aux(topo, pr.a, agg, SmoothingParams())
        rd = restrict_dim(topo)
        ps = smooth_prolongation(filt, p, 2 / 3, rd)
        pt = restrict_rows(p, rd) if rd else p
        coarse = coarsen_topology(topo, agg)
        uc = rigid_modes(coarse)
        for c in range(topo.k):
            assert np.abs(ps @ uc[:, c] - pt @ uc[:, c]).max() <= 1e-12 * max(1.0, np.abs(uc[:, c]).max())

    @pytest.mark.parametrize("cap", [0, 1, 2, 4])
    def test_sparsity_contract(self, cap):
        pr, topo, agg, p = setup("elasticity3d", 2, rounds=3)
        filt = build_filtered_aux(topo, pr.a, agg, SmoothingParams(cap=cap))
        ps = smooth_prolongation(filt, p, 2 / 3, topo.dim)
        assert ps.row_lengths().max() <= cap + 1
        vmap = agg.vertex_map()
        assert np.all(ps.row_lengths()[vmap < 0] == 0)

    def test_shape_mismatch(self):
        pr, topo, agg, p = setup("poisson2d", 4)
        filt = build_filtered_aux(topo, pr.a, agg, SmoothingParams())
        with pytest.raises(ValueError):
            smooth_prolongation(filt, BlockSparseMatrix.identity(3), 0.5)
