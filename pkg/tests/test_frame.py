import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nhcartan import zoo
from nhcartan.errors import FrameInconsistency, SingularFrame
from nhcartan.frame import (GroupFrame, apply_operator, asynchronous_parameters, eta_from_velocity,
                            inverse_matrix, parameters_from_displacement, structure_coefficients,
                            velocity_from_eta, zeta)

finite = st.floats(-2.0, 2.0, allow_nan=False)
so3_angles = st.tuples(finite, st.floats(0.2, np.pi - 0.2), finite).map(np.array)


def hamel_symbols(frame, x, h=1e-5):
    """C_pq^r from the coframe: -(d_k A_rl - d_l A_rk) B_pk B_ql with A = zeta^T."""
    n = frame.n
    B = frame.block(x, 0.0)
    dA = np.zeros((n, n, n))  # dA[r, l, k] = d A_rl / d x_k
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dA[:, :, k] = (zeta(frame, x + e, 0.0).T - zeta(frame, x - e, 0.0).T) / (2 * h)
    curl = dA - np.swapaxes(dA, 1, 2)  # [r, l, k] = d_k A_rl - d_l A_rk
    return -np.einsum("rlk,pk,ql->pqr", curl, B, B)


class TestApplyOperator:
    def test_cartesian_coordinate_function(self):
        fr = zoo.cartesian_frame(2)
        G = lambda x, t: x[..., 1]
        x = np.array([0.3, -0.4])
        assert apply_operator(fr, 1, G, x, 0.0) == pytest.approx(0.0, abs=1e-12)
        assert apply_operator(fr, 2, G, x, 0.0) == pytest.approx(1.0, abs=1e-9)

    def test_drift_operator_on_time(self):
        fr = zoo.so3_body_frame()
        val = apply_operator(fr, 0, lambda x, t: t + 0 * x[..., 0], np.array([0.1, 1.0, 0.4]), 0.7)
        assert val == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_so3_first_angle_against_flow(self, p):
        fr = zoo.so3_body_frame()
        x = np.array([0.2, 1.1, -0.6])
        # directional derivative along the vector field X_p, taken by a short flow step
        v = fr.matrix(x, 0.0)[p, 1:]
        h = 1e-6
        expect = ((x + h * v)[0] - (x - h * v)[0]) / (2 * h)
        assert apply_operator(fr, p, lambda xx, t: xx[..., 0], x, 0.0) == pytest.approx(expect, abs=1e-8)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            apply_operator(zoo.cartesian_frame(2), 1, lambda x, t: x[..., 0], np.zeros(3), 0.0)


class TestStructure:
    def test_cartesian_is_zero(self):
        sc = structure_coefficients(zoo.cartesian_frame(3), np.array([0.1, 0.2, 0.3]), 0.0)
        assert np.all(sc.C0 == 0) and np.all(sc.C == 0)

    @given(so3_angles)
    def test_so3_alternating_symbol(self, x):
        sc = structure_coefficients(zoo.so3_body_frame(), x, 0.0)
        eps = np.zeros((3, 3, 3))
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            eps[i, j, k], eps[j, i, k] = 1.0, -1.0
        assert np.max(np.abs(sc.C - eps)) < 1e-10
        assert np.max(np.abs(sc.C0)) < 1e-12

    @given(so3_angles)
    def test_quasi_coordinate_symbols_match_coframe_route(self, x):
        fr = zoo.so3_body_frame()
        fd_frame = GroupFrame(3, fr.xi, name="so3_fd")  # finite-difference Jacobian, no supplied C
        sc = structure_coefficients(fd_frame, x, 0.0)
        assert np.max(np.abs(sc.C - hamel_symbols(fr, x))) < 1e-6

    @given(so3_angles)
    def test_antisymmetry(self, x):
        sc = structure_coefficients(GroupFrame(3, zoo.so3_body_frame().xi), x, 0.3)
        assert np.max(np.abs(sc.C + np.swapaxes(sc.C, 0, 1))) <= 1e-12

    def test_drift_frame_has_c0(self):
        def xi(x, t):
            out = np.zeros(np.shape(x)[:-1] + (3, 3))
            out[..., 0, 0] = out[..., 1, 1] = out[..., 2, 2] = 1.0
            out[..., 0, 1] = x[..., 1]
            return out
        sc = structure_coefficients(GroupFrame(2, xi), np.array([0.4, 0.2]), 0.0)
        # [X_0, X_2] = -X_1
        assert sc.C0[1, 0] == pytest.approx(-1.0, abs=1e-8)

    def test_inconsistent_supplied_structure(self):
        fr = zoo.so3_body_frame()
        bad = GroupFrame(3, fr.xi, fr.xi_jacobian,
                         lambda x, t: (np.zeros((3, 3)), np.zeros((3, 3, 3))), name="bad")
        with pytest.raises(FrameInconsistency):
            structure_coefficients(bad, np.array([0.1, 1.0, 0.2]), 0.0)
        # unchecked path returns the supplied values as-is
        assert np.all(structure_coefficients(bad, np.array([0.1, 1.0, 0.2]), 0.0, check=False).C == 0)

    def test_singular_frame(self):
        with pytest.raises(SingularFrame):
            structure_coefficients(zoo.so3_body_frame(), np.array([0.0, 1e-13, 0.0]), 0.0)

    def test_pinned_entries_enforced(self):
        fr = GroupFrame(1, lambda x, t: np.array([[1.0, 0.0], [0.5, 1.0]]))
        with pytest.raises(FrameInconsistency):
            fr.matrix(np.zeros(1), 0.0)


class TestVelocityMaps:
    def test_cartesian(self):
        fr = zoo.cartesian_frame(2)
        assert np.allclose(eta_from_velocity(fr, np.zeros(2), np.array([1.0, 2.0]), 0.0), [1.0, 2.0])
        assert np.allclose(velocity_from_eta(fr, np.zeros(2), np.array([3.0, 4.0]), 0.0), [3.0, 4.0])

    def test_pure_drift(self):
        def xi(x, t):
            out = np.eye(3)
            out[0, 1:] = [0.5, -1.5]
            return out
        fr = GroupFrame(2, xi)
        assert np.allclose(velocity_from_eta(fr, np.zeros(2), np.zeros(2), 0.0), [0.5, -1.5])

    def test_so3_uniform_spin(self):
        fr = zoo.so3_body_frame()
        x = np.array([0.3, 0.9, 1.2])
        eta = eta_from_velocity(fr, x, np.array([0.0, 0.0, 2.5]), 0.0)
        assert np.allclose(eta, [0.0, 0.0, 2.5], atol=1e-14)

    @given(so3_angles, arrays(float, 3, elements=finite))
    def test_round_trip(self, x, eta):
        fr = zoo.so3_body_frame()
        back = eta_from_velocity(fr, x, velocity_from_eta(fr, x, eta, 0.0), 0.0)
        assert np.max(np.abs(back - eta)) <= 1e-10

    @given(so3_angles)
    def test_zeta_is_inverse(self, x):
        fr = zoo.so3_body_frame()
        assert np.max(np.abs(zeta(fr, x, 0.0) @ fr.block(x, 0.0) - np.eye(3))) <= 1e-12

    def test_batched(self, rng):
        fr = zoo.so3_body_frame()
        x = np.stack([rng.uniform(-1, 1, (4, 5)), rng.uniform(0.5, 2.5, (4, 5)), rng.uniform(-1, 1, (4, 5))], -1)
        eta = rng.standard_normal((4, 5, 3))
        xd = velocity_from_eta(fr, x, eta, 0.0)
        assert xd.shape == (4, 5, 3)
        assert np.allclose(xd[2, 3], velocity_from_eta(fr, x[2, 3], eta[2, 3], 0.0), rtol=0, atol=1e-15)


class TestAsynchronousParameters:
    def test_synchronous_limit(self):
        om = np.array([0.3, -0.1])
        assert np.array_equal(asynchronous_parameters(om, np.array([5.0, 6.0]), 0.0)[1:], om)

    def test_formula(self):
        out = asynchronous_parameters(np.zeros(3), np.array([1.0, 2.0, 3.0]), 0.5)
        assert np.allclose(out, [0.5, 0.5, 1.0, 1.5])

    @given(so3_angles, arrays(float, 3, elements=finite), st.floats(-1, 1))
    def test_inverse_map(self, x, dx, dt):
        fr = zoo.so3_body_frame()
        Om = parameters_from_displacement(fr, x, 0.0, dt, dx)
        # Delta x_lambda = Omega_mu xi_mu^lambda
        back = Om @ fr.matrix(x, 0.0)
        assert np.allclose(back, np.r_[dt, dx], atol=1e-10)
        assert np.allclose(inverse_matrix(fr, x, 0.0) @ fr.matrix(x, 0.0), np.eye(4), atol=1e-12)
