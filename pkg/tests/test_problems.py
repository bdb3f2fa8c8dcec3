import io

import numpy as np
import pytest

from deedsim.errors import InvalidInputError, RankDeficiencyError
from deedsim.problems import (
    _max_quadratic_on_ball,
    estimate_fed_constants,
    estimate_rho,
    from_node_data,
    load_problem,
    make_linreg,
    save_problem,
    solve_optimum,
)


def scalar_problem(target=2.0):
    return from_node_data([(np.array([[1.0]]), np.array([target]))])


def test_scalar_worked_example():
    p = scalar_problem()
    # f(w) = (w - 2)^2 / 2 with L = mu = 1.
    assert p.L == 1.0 and p.mu == 1.0 and p.kappa == 1.0
    assert p.w_star[0] == pytest.approx(2.0, abs=1e-12)
    assert p.f_star == pytest.approx(0.0, abs=1e-18)
    assert p.f(np.array([3.0])) == pytest.approx(0.5)
    assert p.full_grad(0, np.array([3.0]))[0] == pytest.approx(1.0)


def test_kappa_targeting():
    p = make_linreg(seed=3, d=100, N=10, target_kappa=16.0, rows_per_node=100,
                    interpolating=True)
    eigs = np.linalg.eigvalsh(p.hessian())
    assert eigs[-1] / eigs[0] == pytest.approx(16.0, rel=1e-6)
    assert p.kappa == pytest.approx(16.0, rel=1e-6)  # balanced nodes: L = lam_max


def test_generator_determinism():
    a = make_linreg(seed=11, d=12, N=3, target_kappa=5.0, rows_per_node=15,
                    interpolating=False, noise_scale=0.5)
    b = make_linreg(seed=11, d=12, N=3, target_kappa=5.0, rows_per_node=15,
                    interpolating=False, noise_scale=0.5)
    for Ai, Bi in zip(a.A, b.A):
        assert np.array_equal(Ai, Bi)
    for ai, bi in zip(a.b, b.b):
        assert np.array_equal(ai, bi)


def test_l_spread_controls_node_smoothness():
    p = make_linreg(seed=5, d=40, N=10, target_kappa=16.0, rows_per_node=40,
                    interpolating=True, l_spread=3.125)
    lam_max = np.linalg.eigvalsh(p.hessian())[-1]
    assert p.L / lam_max == pytest.approx(3.125, rel=1e-9)


def test_rank_deficiency_rejected():
    with pytest.raises(RankDeficiencyError):
        make_linreg(seed=0, d=10, N=2, target_kappa=2.0, rows_per_node=3,
                    interpolating=False)


def test_small_row_blocks_supported():
    # Fewer rows than d per node, full rank overall: stacked shaping path.
    p = make_linreg(seed=8, d=12, N=4, target_kappa=6.0, rows_per_node=4,
                    interpolating=True)
    eigs = np.linalg.eigvalsh(p.hessian())
    assert eigs[-1] / eigs[0] == pytest.approx(6.0, rel=1e-6)
    assert p.mu > 0


def test_gradients_match_finite_differences():
    p = make_linreg(seed=7, d=8, N=3, target_kappa=4.0, rows_per_node=10,
                    interpolating=False, noise_scale=1.0)
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(100):
        w = rng.standard_normal(p.d)
        v = rng.standard_normal(p.d)
        v /= np.linalg.norm(v)
        directional = float(p.global_grad(w) @ v)
        central = (p.f(w + h * v) - p.f(w - h * v)) / (2 * h)
        assert directional == pytest.approx(central, rel=1e-6, abs=1e-9)


def test_constants_match_eigenvalues():
    p = make_linreg(seed=9, d=10, N=4, target_kappa=7.0, rows_per_node=12,
                    interpolating=False, noise_scale=0.3)
    worst = max(
        np.linalg.eigvalsh(p.A[i].T @ p.A[i] / p.A[i].shape[0])[-1]
        for i in range(p.N)
    )
    assert p.L == pytest.approx(worst, rel=1e-8)
    assert p.mu == pytest.approx(np.linalg.eigvalsh(p.hessian())[0], rel=1e-8)


def test_gradient_zero_at_optimum():
    p = make_linreg(seed=13, d=20, N=5, target_kappa=3.0, rows_per_node=25,
                    interpolating=True, w_star_scale=2.0)
    g = p.global_grad(p.w_star)
    assert np.linalg.norm(g) <= 1e-10 * p.L * np.linalg.norm(p.w_star)
    assert p.f_star == 0.0


def test_solve_optimum_scalar_and_perturbation():
    p = scalar_problem()
    w, f = solve_optimum(p)
    assert w[0] == pytest.approx(2.0) and f == pytest.approx(0.0, abs=1e-18)

    q = make_linreg(seed=21, d=30, N=5, target_kappa=16.0, rows_per_node=30,
                    interpolating=False, noise_scale=1.0)
    rng = np.random.default_rng(1)
    for _ in range(1000):
        w = q.w_star + rng.standard_normal(q.d) * 10.0 ** rng.uniform(-3, 1)
        assert q.f(w) >= q.f_star - 1e-9


def test_f_gap_quadratic_identity():
    p = make_linreg(seed=4, d=15, N=3, target_kappa=5.0, rows_per_node=20,
                    interpolating=False, noise_scale=2.0)
    rng = np.random.default_rng(2)
    for _ in range(50):
        w = rng.standard_normal(p.d) * 3
        assert p.f_gap(w) == pytest.approx(p.f(w) - p.f_star, rel=1e-8, abs=1e-10)


def test_stochastic_gradient_unbiased():
    p = make_linreg(seed=6, d=6, N=2, target_kappa=2.0, rows_per_node=20,
                    interpolating=True)
    rng = np.random.default_rng(0)
    w = rng.standard_normal(p.d)
    acc = np.zeros(p.d)
    M = 100_000
    for _ in range(M):
        acc += p.stochastic_grad(0, w, rng)
    full = p.full_grad(0, w)
    scale = max(1.0, float(np.linalg.norm(full)))
    assert np.linalg.norm(acc / M - full) <= 0.05 * scale


def test_stochastic_gradient_degenerate_cases():
    # A single-row node is deterministic and equals the full gradient.
    p = from_node_data([(np.array([[1.0, 2.0]]), np.array([0.5])),
                        (np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([0.1, 0.2]))])
    rng = np.random.default_rng(0)
    w = np.array([0.3, -0.7])
    for _ in range(5):
        assert np.allclose(p.stochastic_grad(0, w, rng), p.full_grad(0, w))
    # At an interpolating optimum every sampled row gradient vanishes.
    q = make_linreg(seed=10, d=5, N=3, target_kappa=2.0, rows_per_node=8,
                    interpolating=True)
    for _ in range(50):
        g = q.stochastic_grad(1, q.w_star, rng)
        assert np.linalg.norm(g) <= 1e-12


def test_rho_scalar_single_row():
    # One row per node in 1-D: the growth ratio is identically 1.
    p = from_node_data(
        [(np.array([[1.5]]), np.array([3.0])), (np.array([[1.5]]), np.array([3.0]))],
        interpolating=True,
        exact_w_star=np.array([2.0]),
    )
    assert estimate_rho(p) == pytest.approx(1.05, rel=1e-9)


def test_rho_certificate_and_monotonicity():
    p = make_linreg(seed=19, d=12, N=4, target_kappa=6.0, rows_per_node=15,
                    interpolating=True)
    rho_small = estimate_rho(p, sample_budget=10, rng=np.random.default_rng(0))
    rho_big = estimate_rho(p, sample_budget=200, rng=np.random.default_rng(0))
    assert rho_big >= rho_small >= 1.0

    # Certificate: the growth inequality holds on fresh points.
    rng = np.random.default_rng(99)
    for _ in range(10_000):
        w = p.w_star + rng.standard_normal(p.d) * 10.0 ** rng.uniform(-2, 2)
        second = 0.0
        for i in range(p.N):
            Ai, bi = p.A[i], p.b[i]
            r = Ai @ w - bi
            sq = np.einsum("ij,ij->i", Ai, Ai)
            second += p.weights[i] * float(sq @ r**2) / Ai.shape[0]
        assert second <= rho_big * 2.0 * p.L * p.f_gap(w) * (1 + 1e-9) + 1e-12


def test_rho_requires_interpolation():
    p = make_linreg(seed=1, d=4, N=2, target_kappa=2.0, rows_per_node=6,
                    interpolating=False, noise_scale=1.0)
    with pytest.raises(InvalidInputError):
        estimate_rho(p)


def test_max_quadratic_on_ball_against_brute_force():
    rng = np.random.default_rng(23)
    for _ in range(200):
        d = int(rng.integers(1, 7))
        M = rng.standard_normal((d, d))
        M = (M + M.T) / 2
        q = rng.standard_normal(d)
        c0 = float(rng.standard_normal())
        R = float(rng.uniform(0.1, 3.0))
        exact = _max_quadratic_on_ball(M, q, c0, R)
        best = -np.inf
        for _ in range(4000):
            x = rng.standard_normal(d)
            x *= R * rng.uniform() ** (1.0 / d) / np.linalg.norm(x)
            best = max(best, float(x @ M @ x + 2 * q @ x) + c0)
        assert exact >= best - 1e-9 * max(1.0, abs(best))
        assert exact <= best + 0.35 * max(1.0, abs(best))  # sampling comes close


def test_fed_constants_homogeneous_gamma_zero():
    A = np.random.default_rng(0).standard_normal((8, 4))
    b = np.random.default_rng(1).standard_normal(8)
    p = from_node_data([(A.copy(), b.copy()) for _ in range(3)])
    fed = estimate_fed_constants(p, E=3, K=3, participation="full",
                                 trajectory_radius=1.0)
    assert fed.Gamma == pytest.approx(0.0, abs=1e-12)
    assert fed.C == 0.0


def test_fed_constants_participation_formulas():
    p = make_linreg(seed=2, d=6, N=5, target_kappa=3.0, rows_per_node=8,
                    interpolating=False, noise_scale=1.0)
    full = estimate_fed_constants(p, E=4, K=5, participation="full",
                                  trajectory_radius=2.0)
    s1 = estimate_fed_constants(p, E=4, K=2, participation="with-replacement",
                                trajectory_radius=2.0)
    s2 = estimate_fed_constants(p, E=4, K=2, participation="without-replacement",
                                trajectory_radius=2.0)
    s2_full = estimate_fed_constants(p, E=4, K=5, participation="without-replacement",
                                     trajectory_radius=2.0)
    G2 = full.G_sq
    assert full.C == 0.0
    assert s1.C == pytest.approx(4.0 * 16 * G2 / 2)
    assert s2.C == pytest.approx((5 - 2) / 4 * 4.0 * 16 * G2 / 2)
    assert s2_full.C == 0.0
    # B reassembles from its parts exactly.
    B = float(p.weights**2 @ full.sigma_sq) + 6 * p.L * full.Gamma + 8 * 9 * G2
    assert full.B == pytest.approx(B, rel=1e-12)


def test_fed_constants_certify_on_ball():
    p = make_linreg(seed=15, d=5, N=3, target_kappa=4.0, rows_per_node=9,
                    interpolating=False, noise_scale=1.5)
    R = 2.5
    fed = estimate_fed_constants(p, E=2, K=3, participation="full",
                                 trajectory_radius=R)
    rng = np.random.default_rng(3)
    for _ in range(3000):
        delta = rng.standard_normal(p.d)
        delta *= R * rng.uniform() / np.linalg.norm(delta)
        w = p.w_star + delta
        for k in range(p.N):
            Ak, bk = p.A[k], p.b[k]
            r = Ak @ w - bk
            sq = np.einsum("ij,ij->i", Ak, Ak)
            second = float(sq @ r**2) / Ak.shape[0]
            assert second <= fed.G_sq * (1 + 1e-9)
            var = second - float(p.full_grad(k, w) @ p.full_grad(k, w))
            assert var <= fed.sigma_sq[k] * (1 + 1e-9) + 1e-12


def test_serialization_roundtrip_and_determinism():
    p = make_linreg(seed=31, d=8, N=3, target_kappa=4.0, rows_per_node=10,
                    interpolating=True, w_star_scale=2.0)
    buf = io.BytesIO()
    save_problem(p, buf)
    first = buf.getvalue()
    buf2 = io.BytesIO()
    save_problem(p, buf2)
    assert buf2.getvalue() == first  # byte-for-byte reproducible

    q = load_problem(io.BytesIO(first))
    assert q.N == p.N and q.d == p.d
    for a, b in zip(p.A, q.A):
        assert np.array_equal(a, b)
    assert np.array_equal(p.w_star, q.w_star)
    assert q.interpolating and q.f_star == 0.0
