import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from passive_lab.node import (BoundaryNode, SpectrumError, SystemNode, boundary_passivity_margin,
                              coercivity_margin, format_matrix, from_boundary_node, hermitian_part,
                              impedance_passivity_margin, negative_feedback_closed_loop, parse_matrix,
                              read_matrix, remove_inert_states, spectral_abscissa, transfer_function,
                              write_matrix)

SCALAR = SystemNode(-1.0, 1.0, 1.0, 0.0)


def random_passive_node(rng, n=4, m=2, complex_=True):
    """``A = (J - R)``, ``B = C^*``, ``Re D >= 0``: passive by construction."""
    def mat(r, c):
        M = rng.standard_normal((r, c))
        return M + 1j * rng.standard_normal((r, c)) if complex_ else M
    J = mat(n, n)
    J = J - J.conj().T
    R = mat(n, n)
    R = R @ R.conj().T
    C = mat(m, n)
    S = mat(m, m)
    D = S @ S.conj().T + (S - S.conj().T)
    return SystemNode(J - R, C.conj().T, C, D)


def test_scalar_lmi_examples():
    assert impedance_passivity_margin(SCALAR) == 0.0
    np.testing.assert_array_equal(SCALAR.lmi_matrix(), [[-2, 0], [0, 0]])
    assert impedance_passivity_margin(SystemNode(1.0, 1.0, 1.0, 0.0)) == pytest.approx(2.0)
    assert SCALAR.is_passive() and SCALAR.is_real


def test_shape_validation():
    with pytest.raises(ValueError):
        SystemNode(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), 0.0)
    with pytest.raises(ValueError):
        SystemNode(np.ones((2, 3)), np.ones((2, 1)), np.ones((1, 2)), 0.0)
    with pytest.raises(ValueError):
        SystemNode([[np.nan]], 1.0, 1.0, 0.0)


def test_transfer_function_examples():
    assert transfer_function(SCALAR, 1.0)[0, 0] == pytest.approx(0.5)
    assert coercivity_margin(SCALAR, 1.0) == pytest.approx(0.5)
    with pytest.raises(SpectrumError):
        transfer_function(SystemNode(1.0, 1.0, 1.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        coercivity_margin(SCALAR, -1.0)


def test_transfer_function_large_lambda_decay():
    node = random_passive_node(np.random.default_rng(3))
    normA = np.linalg.norm(node.A, 2)
    bound_const = np.linalg.norm(node.C, 2) * np.linalg.norm(node.B, 2)
    for lam in (3 * normA, 10 * normA, 100 * normA):
        err = np.linalg.norm(transfer_function(node, lam) - node.D, 2)
        assert err <= bound_const / (lam - normA)


def test_coercivity_with_zero_output():
    node = SystemNode(-np.eye(2), np.ones((2, 1)), np.zeros((1, 2)), 0.0)
    assert coercivity_margin(node, 1.0) == 0.0


def test_from_boundary_node_hand_example():
    node = from_boundary_node(BoundaryNode(-1.0, 1.0, 1.0, 1.0))
    assert (node.A[0, 0], node.B[0, 0], node.C[0, 0], node.D[0, 0]) == (0.0, -1.0, 0.0, 1.0)


def test_from_boundary_node_consistency():
    rng = np.random.default_rng(5)
    n, m = 6, 2
    L = -np.eye(n) + 0.3 * rng.standard_normal((n, n))
    G = rng.standard_normal((m, n))
    K = G.copy()
    Gr = np.linalg.pinv(G)
    node = from_boundary_node(BoundaryNode(L, G, K, Gr))
    X = rng.standard_normal((1000, n))
    U = X @ G.T
    lhs = X @ node.A.T + U @ node.B.T
    out = X @ node.C.T + U @ node.D.T
    assert np.max(np.abs(lhs - X @ L.T)) <= 1e-12 * np.max(np.abs(X @ L.T))
    assert np.max(np.abs(out - X @ K.T)) <= 1e-12 * np.max(np.abs(X @ K.T))


def test_from_boundary_node_rejects_bad_right_inverse():
    with pytest.raises(ValueError):
        from_boundary_node(BoundaryNode(-np.eye(2), [[1.0, 0.0]], [[1.0, 0.0]], [[2.0], [0.0]]))


def test_boundary_node_requires_full_row_rank():
    with pytest.raises(ValueError):
        BoundaryNode(np.eye(2), np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((2, 1)))


def test_boundary_passivity_form():
    b = BoundaryNode(-np.eye(2), [[1.0, 0.0]], [[1.0, 0.0]], [[1.0], [0.0]])
    assert boundary_passivity_margin(b) <= 0.0


def test_remove_inert_states():
    A = np.diag([-1.0, 0.0])
    node = SystemNode(A, [[1.0], [0.0]], [[1.0, 0.0]], [[0.0]])
    reduced, keep = remove_inert_states(node)
    assert reduced.n == 1 and list(keep) == [0]


def test_negative_feedback_examples():
    assert negative_feedback_closed_loop(SCALAR)[0, 0] == -2.0
    node = SystemNode(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
    np.testing.assert_allclose(negative_feedback_closed_loop(node), -0.5 * np.eye(2))
    with pytest.raises(ValueError):
        negative_feedback_closed_loop(SystemNode(0.0, 1.0, 1.0, -1.0))


def test_spectral_abscissa_examples():
    assert spectral_abscissa(-2.0) == -2.0
    assert spectral_abscissa([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(0.0, abs=1e-15)


def test_size_cap():
    from passive_lab import node as node_mod
    old = node_mod.MAX_STATE_DIM
    node_mod.MAX_STATE_DIM = 3
    try:
        with pytest.raises(ValueError):
            SystemNode(np.eye(4), np.ones((4, 1)), np.ones((1, 4)), 0.0)
    finally:
        node_mod.MAX_STATE_DIM = old


def test_matrix_text_roundtrip(tmp_path):
    M = np.array([[1.5, -2 + 0.25j], [0.0, 1e-300 - 3j]])
    path = tmp_path / "m.txt"
    write_matrix(path, M)
    np.testing.assert_array_equal(read_matrix(path), M)
    assert "-2.0+0.25i" in format_matrix(M)
    np.testing.assert_array_equal(parse_matrix("# comment\n1 2\n3 4 # tail\n"), [[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        parse_matrix("1 2\n3\n")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_passive_node_properties(seed):
    rng = np.random.default_rng(seed)
    node = random_passive_node(rng)
    assert impedance_passivity_margin(node) <= 1e-10
    assert np.linalg.eigvalsh(hermitian_part(node.D))[0] >= -1e-10
    AK = negative_feedback_closed_loop(node)
    assert np.linalg.eigvalsh(hermitian_part(AK))[-1] <= 1e-10
    assert spectral_abscissa(AK) <= 1e-10
    l1, l2 = rng.uniform(0.5, 3.0, size=2)
    R1 = np.linalg.inv(l1 * np.eye(node.n) - node.A)
    R2 = np.linalg.inv(l2 * np.eye(node.n) - node.A)
    lhs = transfer_function(node, l1) - transfer_function(node, l2)
    rhs = (l2 - l1) * node.C @ R1 @ R2 @ node.B
    assert np.max(np.abs(lhs - rhs)) <= 1e-10
    assert coercivity_margin(node, l1) >= -1e-10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=9))
def test_matrix_format_roundtrip_property(entries):
    M = np.array([complex(a, b) for a, b in entries]).reshape(1, -1)
    back = parse_matrix(format_matrix(M))
    np.testing.assert_array_equal(np.asarray(back, dtype=complex), M)
