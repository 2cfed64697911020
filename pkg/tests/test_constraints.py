import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nhcartan import zoo
from nhcartan.constraints import (ConstraintSet, a_holder, a_star, admissible_omega, chetaev_residual,
                                  complete_eta, constraint_residual, k_coefficients, starred_apply)
from nhcartan.errors import MissingCurvature
from nhcartan.frame import structure_coefficients, velocity_from_eta

vec2 = arrays(float, 2, elements=st.floats(-2, 2, allow_nan=False))


def so3_linear_constraint():
    """eta_3 = b(x) eta_1 + c eta_2 with b = 0.3 + 0.2 sin(x_1)."""
    c = -0.4

    def phi(e, x, t):
        return ((0.3 + 0.2 * np.sin(x[..., 0])) * e[..., 0] + c * e[..., 1])[..., None]

    def dphi(e, x, t):
        b = 0.3 + 0.2 * np.sin(x[..., 0])
        return np.stack([b, c + 0 * b], axis=-1)[..., None, :]

    return ConstraintSet(2, 3, phi, dphi, label="so3_linear")


def dense_astar(frame, cs, x, eta_i, t, eta_dot):
    """Term-by-term loops over every index, with all partials by differences."""
    m, n = cs.m, cs.n
    na = n - m
    h = 1e-6
    sc = structure_coefficients(frame, x, t)
    C0, C = sc.C0, sc.C
    eta = complete_eta(cs, eta_i, x, t)
    G = cs.dphi_deta(eta_i, x, t)
    xi = frame.matrix(x, t)
    xdot = velocity_from_eta(frame, x, eta, t)

    def K0(j, r):
        return C0[j, r] + sum(C0[m + b, r] * G[b, j] for b in range(na))

    def Kq(q, j, r):
        return C[q, j, r] + sum(C[q, m + b, r] * G[b, j] for b in range(na))

    def dphidx(a, q):
        e = np.zeros(n)
        e[q] = h
        return (cs.phi(eta_i, x + e, t)[a] - cs.phi(eta_i, x - e, t)[a]) / (2 * h)

    def ddt_dphi(a, j):
        # d/dt of dphi_a/deta_j along (eta_dot, xdot)
        val = 0.0
        for q in range(n):
            e = np.zeros(n)
            e[q] = h
            val += xdot[q] * (cs.dphi_deta(eta_i, x + e, t)[a, j] - cs.dphi_deta(eta_i, x - e, t)[a, j]) / (2 * h)
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            val += eta_dot[i] * (cs.dphi_deta(eta_i + e, x, t)[a, j] - cs.dphi_deta(eta_i - e, x, t)[a, j]) / (2 * h)
        return val

    out = np.zeros((na, m))
    for a in range(na):
        for j in range(m):
            Xstar = sum(xi[1 + j, 1 + q] * dphidx(a, q) for q in range(n))
            Xstar += sum(G[b, j] * xi[1 + m + b, 1 + q] * dphidx(a, q) for b in range(na) for q in range(n))
            Ka = K0(j, m + a) + sum(Kq(q, j, m + a) * eta[q] for q in range(n))
            Kk = sum((K0(j, k) + sum(Kq(q, j, k) * eta[q] for q in range(n))) * G[a, k] for k in range(m))
            out[a, j] = ddt_dphi(a, j) - Xstar + Ka - Kk
    return out


class TestCompletion:
    def test_empty_constraints(self):
        cs = ConstraintSet.none(3)
        assert np.array_equal(complete_eta(cs, np.array([1.0, 2.0, 3.0]), np.zeros(3), 0.0), [1, 2, 3])

    def test_knife_edge(self, models):
        cs = models["knife_edge"].constraints
        assert np.allclose(complete_eta(cs, np.array([2.0, 3.0]), np.zeros(3), 0.0), [2.0, 3.0, 1.0])

    def test_quadratic(self, models):
        cs = models["quadratic_constraint_particle"].constraints
        assert np.allclose(complete_eta(cs, np.array([1.0, 2.0]), np.zeros(3), 0.0), [1.0, 2.0, 2.5])

    @given(vec2)
    def test_admissible_exactly(self, e):
        cs = zoo.get_model("quadratic_constraint_particle", a=0.7).constraints
        assert np.all(constraint_residual(cs, complete_eta(cs, e, np.zeros(3), 0.0), np.zeros(3), 0.0) == 0.0)


class TestAdmissibleOmega:
    def test_zero(self, models):
        cs = models["knife_edge"].constraints
        assert np.all(admissible_omega(cs, np.zeros(2), np.ones(2), np.zeros(3), 0.0) == 0)

    def test_linear(self, models):
        cs = models["knife_edge"].constraints
        assert np.allclose(admissible_omega(cs, np.array([1.0, 0.0]), np.ones(2), np.zeros(3), 0.0), [1, 0, 0.5])

    def test_quadratic(self, models):
        cs = models["quadratic_constraint_particle"].constraints
        om = admissible_omega(cs, np.array([1.0, 0.0]), np.array([0.6, -0.2]), np.zeros(3), 0.0)
        assert om[2] == pytest.approx(0.6)

    @given(vec2, vec2)
    def test_chetaev(self, e, w):
        cs = so3_linear_constraint()
        x = np.array([0.4, 1.0, 0.2])
        om = admissible_omega(cs, w, e, x, 0.0)
        assert np.max(np.abs(chetaev_residual(cs, om, e, x, 0.0))) <= 1e-14


class TestK:
    def test_zero_structure(self, models):
        d = models["quadratic_constraint_particle"]
        K = k_coefficients(d.frame, d.constraints, np.ones(3), np.ones(3), 0.0)
        for arr in K[:4]:
            assert np.all(arr == 0.0)

    def test_so3_unconstrained(self):
        fr = zoo.so3_body_frame()
        x = np.array([0.1, 1.0, 0.5])
        K = k_coefficients(fr, ConstraintSet.none(3), x, np.ones(3), 0.0)
        assert np.array_equal(K.Kqk, structure_coefficients(fr, x, 0.0, check=False).C)

    def test_so3_linear_against_loops(self):
        fr, cs = zoo.so3_body_frame(), so3_linear_constraint()
        x, e = np.array([0.4, 1.0, 0.2]), np.array([0.3, -0.7])
        K = k_coefficients(fr, cs, x, complete_eta(cs, e, x, 0.0), 0.0)
        C = structure_coefficients(fr, x, 0.0).C
        G = cs.dphi_deta(e, x, 0.0)
        for q in range(3):
            for j in range(2):
                for k in range(2):
                    assert K.Kqk[q, j, k] == pytest.approx(C[q, j, k] + C[q, 2, k] * G[0, j], abs=1e-12)
                assert K.Kqa[q, j, 0] == pytest.approx(C[q, j, 2] + C[q, 2, 2] * G[0, j], abs=1e-12)


class TestStarred:
    def test_unconstrained_is_plain_operator(self):
        fr = zoo.so3_body_frame()
        x = np.array([0.1, 1.0, 0.5])
        G = lambda xx, t: np.sin(xx[..., 0]) * xx[..., 2]
        from nhcartan.frame import apply_operator
        for j in range(3):
            assert starred_apply(fr, ConstraintSet.none(3), j, G, x, np.ones(3), 0.0) == pytest.approx(
                apply_operator(fr, j + 1, G, x, 0.0), abs=1e-12)

    def test_quadratic_on_x3(self, models):
        d = models["quadratic_constraint_particle"]
        e = np.array([0.8, -0.3])
        val = starred_apply(d.frame, d.constraints, 0, lambda x, t: x[..., 2], np.zeros(3), e, 0.0)
        assert val == pytest.approx(e[0] / d.parameters["a"], abs=1e-9)


class TestAStar:
    def test_linear_constant_cartesian_zero(self, models):
        d = models["knife_edge"]
        A = a_star(d.frame, d.constraints, np.ones(3), np.ones(2), 0.0, eta_dot=np.array([0.3, 0.1]))
        assert np.all(A.value == 0)
        assert np.all(a_holder(d.frame, d.constraints, np.ones(3), np.ones(2), 0.0, np.array([0.3, 0.1])) == 0)

    def test_quadratic_pure_curvature(self, models):
        d = models["quadratic_constraint_particle"]
        ed = np.array([0.3, -1.2])
        A = a_star(d.frame, d.constraints, np.ones(3), np.array([0.5, 0.5]), 0.0, eta_dot=ed)
        assert np.allclose(A.value[0], ed / d.parameters["a"], atol=1e-15)
        H = a_holder(d.frame, d.constraints, np.ones(3), np.array([0.5, 0.5]), 0.0, ed)
        assert np.allclose(H, A.value, atol=1e-15)

    def test_so3_linear_against_dense_oracle(self):
        fr, cs = zoo.so3_body_frame(), so3_linear_constraint()
        x, e, ed = np.array([0.4, 1.0, 0.2]), np.array([0.3, -0.7]), np.array([0.2, 0.5])
        A = a_star(fr, cs, x, e, 0.0, eta_dot=ed)
        assert np.max(np.abs(A.value - dense_astar(fr, cs, x, e, 0.0, ed))) < 1e-8
        diff = np.max(np.abs(a_holder(fr, cs, x, e, 0.0, ed) - A.value))
        print(f"first vs second viewpoint coefficient difference: {diff:.3e}")

    @given(vec2, vec2, vec2)
    def test_affine_in_eta_dot(self, e, d1, d2):
        # nonlinear constraint on a frame with structure: every term of A* is active
        fr, cs = zoo.so3_body_frame(), zoo.get_model("quadratic_constraint_particle").constraints
        x = np.array([0.4, 1.0, 0.2])
        f = lambda ed: a_star(fr, cs, x, e, 0.0, eta_dot=ed).value
        lhs = f(d1 + d2) - f(np.zeros(2))
        rhs = (f(d1) - f(np.zeros(2))) + (f(d2) - f(np.zeros(2)))
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(lhs)))

    def test_missing_curvature(self):
        def dphi(e, x, t):
            if np.any(e != np.round(e)):
                raise ValueError("only integer points")
            return np.zeros(np.shape(e)[:-1] + (1, 1))
        cs = ConstraintSet(1, 2, lambda e, x, t: 0 * e, dphi)
        with pytest.raises(MissingCurvature):
            cs.hess_eta(np.array([1.0]), np.zeros(2), 0.0)
