"""Fast products: transforms, accumulation semantics, determinism."""

import numpy as np
import pytest

import h2krylov as hk
from h2krylov.errors import ContractError, DimensionMismatchError


@pytest.fixture(scope="module")
def small():
    # densified operator, the exact reference for the fast products
    from conftest import build_instance
    inst = build_instance(300, order=3, leaf_size=16)
    return inst, hk.densify(inst["h2"])


class TestForwardBackward:
    def test_forward_matches_expansion(self, small, rng):
        inst, _ = small
        h2, tree = inst["h2"], inst["tree"]
        basis = h2.col_basis
        x = rng.standard_normal((tree.n, 2))
        coeffs = hk.forward(basis, x)
        xperm = x[tree.permutation]
        for c in tree.clusters:
            expected = basis.expand(c).T @ xperm[c.start:c.end]
            np.testing.assert_allclose(coeffs.block(c.id), expected,
                                       rtol=1e-12, atol=1e-13)

    def test_backward_is_adjoint_of_forward(self, small, rng):
        inst, _ = small
        h2, tree = inst["h2"], inst["tree"]
        basis = h2.row_basis
        x = rng.standard_normal((tree.n, 1))
        yhat = hk.forward(basis, rng.standard_normal((tree.n, 1)))
        coeffs_of_x = hk.forward(basis, x)
        lhs = np.vdot(coeffs_of_x.data, yhat.data)
        y = np.zeros((tree.n, 1))
        hk.backward(basis, yhat, y)
        rhs = np.vdot(x, y)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)

    def test_parallel_transforms_bitwise(self, small, rng):
        inst, _ = small
        basis = inst["h2"].row_basis
        n = inst["tree"].n
        x = rng.standard_normal((n, 3))
        seq = hk.forward(basis, x)
        par = hk.parallel_forward(basis, x, threads=4)
        assert np.array_equal(seq.data, par.data)

        y_seq = np.zeros((n, 3))
        y_par = np.zeros((n, 3))
        hk.backward(basis, hk.forward(basis, x), y_seq)
        hk.parallel_backward(basis, hk.forward(basis, x), y_par, threads=4)
        assert np.array_equal(y_seq, y_par)

    def test_backward_requires_array_output(self, small, rng):
        inst, _ = small
        basis = inst["h2"].row_basis
        coeffs = hk.forward(basis, rng.standard_normal(inst["tree"].n))
        with pytest.raises(ContractError):
            hk.backward(basis, coeffs, [[0.0]] * inst["tree"].n)

    def test_backward_rejects_narrowing_dtype(self, small, rng):
        inst, _ = small
        basis = inst["h2"].row_basis
        n = inst["tree"].n
        coeffs = hk.forward(basis, rng.standard_normal(n)
                            + 1j * rng.standard_normal(n))
        with pytest.raises(ContractError):
            hk.backward(basis, coeffs, np.zeros((n, 1)))


class TestProducts:
    def test_matches_dense(self, small, rng):
        inst, g = small
        n = g.shape[0]
        x = rng.standard_normal((n, 4))
        y = np.zeros((n, 4))
        hk.addeval_block(1.0, inst["h2"], x, y)
        scale = np.linalg.norm(g) * np.linalg.norm(x)
        assert np.linalg.norm(y - g @ x) <= 1e-12 * scale

    def test_accumulates_into_y(self, small, rng):
        inst, g = small
        n = g.shape[0]
        x = rng.standard_normal((n, 2))
        y = rng.standard_normal((n, 2))
        y0 = y.copy()
        hk.addeval_block(1.0, inst["h2"], x, y)
        np.testing.assert_allclose(y - y0, g @ x, rtol=1e-10, atol=1e-12)

    def test_alpha_power_of_two_exact(self, small, rng):
        inst, _ = small
        n = inst["tree"].n
        x = rng.standard_normal(n)
        y1 = np.zeros(n)
        y2 = np.zeros(n)
        hk.addeval_block(1.0, inst["h2"], x, y1)
        hk.addeval_block(2.0, inst["h2"], x, y2)
        assert np.array_equal(y2, 2.0 * y1)

    def test_negative_alpha_residual(self, small, rng):
        inst, g = small
        n = g.shape[0]
        x = rng.standard_normal(n)
        y = g @ x
        hk.addeval_block(-1.0, inst["h2"], x, y)
        assert np.linalg.norm(y) <= 1e-12 * np.linalg.norm(g @ x)

    def test_recursive_equals_list_bitwise(self, small, rng):
        inst, _ = small
        n = inst["tree"].n
        x = rng.standard_normal((n, 3))
        y_rec = np.zeros((n, 3))
        y_list = np.zeros((n, 3))
        hk.addeval_recursive(1.0, inst["h2"], x, y_rec)
        hk.addeval_list(1.0, inst["h2"], x, y_list)
        assert np.array_equal(y_rec, y_list)

    @pytest.mark.parametrize("threads", [2, 8])
    def test_threaded_bitwise_identical(self, small, rng, threads):
        inst, _ = small
        n = inst["tree"].n
        x = rng.standard_normal((n, 5))
        y1 = np.zeros((n, 5))
        yt = np.zeros((n, 5))
        hk.addeval_block(1.0, inst["h2"], x, y1, threads=1)
        hk.addeval_block(1.0, inst["h2"], x, yt, threads=threads)
        assert np.array_equal(y1, yt)

    def test_repeated_runs_bitwise_identical(self, small, rng):
        inst, _ = small
        n = inst["tree"].n
        x = rng.standard_normal((n, 2))
        outs = []
        for _ in range(3):
            y = np.zeros((n, 2))
            hk.addeval_block(1.0, inst["h2"], x, y, threads=2)
            outs.append(y)
        assert np.array_equal(outs[0], outs[1])
        assert np.array_equal(outs[1], outs[2])

    def test_single_vector_matches_column(self, small, rng):
        inst, _ = small
        n = inst["tree"].n
        x = rng.standard_normal(n)
        y_vec = np.zeros(n)
        y_col = np.zeros((n, 1))
        hk.addeval_block(1.0, inst["h2"], x, y_vec)
        hk.addeval_block(1.0, inst["h2"], x[:, None], y_col)
        assert np.array_equal(y_vec, y_col[:, 0])

    def test_matvec_convenience(self, small, rng):
        inst, g = small
        n = g.shape[0]
        x = rng.standard_normal(n)
        y = hk.matvec(inst["h2"], x)
        np.testing.assert_allclose(y, g @ x, rtol=1e-10, atol=1e-12)

    def test_complex_product(self, rng):
        from conftest import build_instance
        inst = build_instance(200, kernel="helmholtz", order=3, leaf_size=16)
        g = hk.densify(inst["h2"])
        x = rng.standard_normal((200, 2)) + 1j * rng.standard_normal((200, 2))
        y = np.zeros((200, 2), dtype=np.complex128)
        hk.addeval_block(1.0, inst["h2"], x, y)
        scale = np.linalg.norm(g) * np.linalg.norm(x)
        assert np.linalg.norm(y - g @ x) <= 1e-12 * scale

    def test_real_after_complex_workspace_reuse(self, small, rng):
        # dtype of the shared workspace must follow the request
        inst, g = small
        n = g.shape[0]
        xc = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        yc = np.zeros(n, dtype=np.complex128)
        hk.addeval_block(1.0, inst["h2"], xc, yc)
        xr = rng.standard_normal(n)
        yr = np.zeros(n)
        hk.addeval_block(1.0, inst["h2"], xr, yr)
        assert yr.dtype == np.float64
        np.testing.assert_allclose(yr, g @ xr, rtol=1e-10, atol=1e-12)

    def test_output_list_rejected(self, small, rng):
        inst, _ = small
        n = inst["tree"].n
        with pytest.raises(ContractError):
            hk.addeval_block(1.0, inst["h2"], np.ones(n), [0.0] * n)

    def test_wrong_length_rejected(self, small):
        inst, _ = small
        with pytest.raises(DimensionMismatchError):
            hk.addeval_block(1.0, inst["h2"], np.ones(7), np.zeros(7))
