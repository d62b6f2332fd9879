import numpy as np
import pytest

from rotacell.conic import (
    ConicProgram,
    SocConstraint,
    SolveStatus,
    compile_program,
    dump_program,
    embed_complex,
    quad_constraint_to_soc,
    solve,
)


def ball_program(center, radius, direction):
    """min directionᵀx over the ball ‖x - center‖ <= radius."""
    n = len(center)
    con = SocConstraint(np.eye(n), -np.asarray(center, float), np.zeros(n), radius)
    return ConicProgram(n, np.asarray(direction, float), [con])


def test_ball_extreme_point():
    sol = solve(ball_program([1.0, -2.0, 0.5], 2.0, [-1.0, 0.0, 0.0]))
    assert sol.status is SolveStatus.OPTIMAL
    # minimizer of -x1 over the ball: center + radius * e1
    assert np.allclose(sol.x, [3.0, -2.0, 0.5], atol=1e-6)
    assert sol.objective_value == pytest.approx(-3.0, abs=1e-7)


def test_oblique_ball_direction():
    d = np.array([1.0, 2.0, -2.0])
    sol = solve(ball_program([0.0, 0.0, 0.0], 1.5, d))
    assert sol.status is SolveStatus.OPTIMAL
    assert np.allclose(sol.x, -1.5 * d / np.linalg.norm(d), atol=1e-6)


def test_linear_program():
    # min x + y  s.t. x >= 1, y >= 2, x + y <= 10
    cons = [
        SocConstraint(np.zeros((0, 2)), np.zeros(0), [1.0, 0.0], -1.0),
        SocConstraint(np.zeros((0, 2)), np.zeros(0), [0.0, 1.0], -2.0),
        SocConstraint(np.zeros((0, 2)), np.zeros(0), [-1.0, -1.0], 10.0),
    ]
    sol = solve(ConicProgram(2, np.array([1.0, 1.0]), cons))
    assert sol.status is SolveStatus.OPTIMAL
    assert np.allclose(sol.x, [1.0, 2.0], atol=1e-7)


def test_box_bounds():
    prog = ConicProgram(
        2,
        np.array([-1.0, 1.0]),
        [],
        lower=np.array([-np.inf, 0.25]),
        upper=np.array([4.0, np.inf]),
    )
    sol = solve(prog)
    assert sol.status is SolveStatus.OPTIMAL
    assert np.allclose(sol.x, [4.0, 0.25], atol=1e-7)


def test_infeasible_certificate():
    # x >= 1 and x <= 0
    cons = [
        SocConstraint(np.zeros((0, 1)), np.zeros(0), [1.0], -1.0),
        SocConstraint(np.zeros((0, 1)), np.zeros(0), [-1.0], 0.0),
    ]
    sol = solve(ConicProgram(1, np.array([0.0]), cons))
    assert sol.status is SolveStatus.INFEASIBLE


def test_infeasible_soc():
    # ‖x‖ <= -1 is empty
    con = SocConstraint(np.eye(2), np.zeros(2), np.zeros(2), -1.0)
    sol = solve(ConicProgram(2, np.array([1.0, 0.0]), [con]))
    assert sol.status is SolveStatus.INFEASIBLE


def test_constraint_violation_helper():
    con = SocConstraint(np.eye(2), np.zeros(2), np.zeros(2), 1.0)
    assert con.violation(np.array([0.5, 0.0])) == 0.0
    assert con.violation(np.array([2.0, 0.0])) == pytest.approx(1.0)


def test_dimension_mismatches():
    with pytest.raises(ValueError, match="row counts"):
        SocConstraint(np.eye(2), np.zeros(3), np.zeros(2), 1.0)
    with pytest.raises(ValueError, match="column counts"):
        SocConstraint(np.eye(2), np.zeros(2), np.zeros(3), 1.0)
    with pytest.raises(ValueError, match="objective length"):
        ConicProgram(3, np.zeros(2), [SocConstraint(np.eye(3), np.zeros(3), np.zeros(3), 1.0)])
    with pytest.raises(ValueError, match="at least one constraint"):
        ConicProgram(2, np.zeros(2), [])


def test_compile_layout_order():
    # bounds become orthant rows, then linear constraints, then SOC blocks
    prog = ConicProgram(
        2,
        np.zeros(2),
        [
            SocConstraint(np.zeros((0, 2)), np.zeros(0), [1.0, 0.0], 0.0),
            SocConstraint(np.eye(2), np.zeros(2), np.zeros(2), 3.0),
        ],
        upper=np.array([5.0, np.inf]),
    )
    sf = compile_program(prog)
    assert sf.layout.l == 2
    assert sf.layout.q == [3]
    assert sf.G.shape == (5, 2)
    # upper-bound row: x0 + s = 5
    assert sf.G[0, 0] == 1.0 and sf.h[0] == 5.0


def test_quad_constraint_round_trip(rng):
    # x'Px + q'x + r <= 0 ellipsoid: SOC form must match membership
    L = rng.normal(size=(3, 3))
    P = L @ L.T + 0.5 * np.eye(3)
    q = rng.normal(size=3)
    r = -5.0
    con = quad_constraint_to_soc(P, q, r)
    for _ in range(200):
        x = rng.normal(size=3)
        val = x @ P @ x + q @ x + r
        viol = con.violation(x)
        if val <= -1e-9:
            assert viol <= 1e-9
        elif val >= 1e-9:
            assert viol > 0.0


def test_quad_constraint_zero_p_degenerates():
    con = quad_constraint_to_soc(np.zeros((2, 2)), [1.0, 0.0], -2.0)
    assert con.A.shape[0] == 0
    assert con.violation(np.array([1.0, 0.0])) == 0.0
    assert con.violation(np.array([3.0, 0.0])) > 0.0


def test_quad_constraint_rejects_indefinite():
    with pytest.raises(ValueError, match="positive semidefinite"):
        quad_constraint_to_soc(np.diag([1.0, -1.0]), np.zeros(2), 0.0)


def test_complex_embedding_coeffs(rng):
    emb = embed_complex(4)
    a = rng.normal(size=4) + 1j * rng.normal(size=4)
    z = rng.normal(size=4) + 1j * rng.normal(size=4)
    x = emb.to_real(z)
    assert emb.real_coeff(a) @ x == pytest.approx((np.conj(a) @ z).real, rel=1e-12)
    assert emb.imag_coeff(a) @ x == pytest.approx((np.conj(a) @ z).imag, rel=1e-12)
    assert np.allclose(emb.to_complex(x), z)
    with pytest.raises(ValueError):
        embed_complex(0)


def test_dump_program_stable():
    prog = ball_program([1.0, 0.0], 2.0, [0.0, 1.0])
    assert dump_program(prog) == dump_program(ball_program([1.0, 0.0], 2.0, [0.0, 1.0]))
    assert "soc 0 rows 2" in dump_program(prog)


def test_solution_quality_fields():
    sol = solve(ball_program([0.0, 0.0], 1.0, [1.0, 0.0]), tol=1e-9)
    assert sol.primal_residual <= 1e-8
    assert sol.relative_gap <= 1e-7
    assert sol.iterations > 0
