import numpy as np
import pytest

from itergraph.graphreg import GraphRegWeights, connectivity_sparsity, dirichlet_energy, graph_reg_loss
from itergraph.numkit import ContractError, Tape, Tensor, backward, grad_check, ops


def dirichlet_oracle(a, x):
    n = a.shape[0]
    tot = 0.0
    for i in range(n):
        for j in range(n):
            tot += a[i, j] * np.sum((x[i] - x[j]) ** 2)
    return tot / (2 * n * n)


def _sym(r, n, density=0.5):
    a = r.uniform(size=(n, n)) * (r.uniform(size=(n, n)) < density)
    return np.triu(a) + np.triu(a, 1).T


def test_dirichlet_zero_graph():
    x = np.random.default_rng(0).normal(size=(4, 3))
    assert dirichlet_energy(Tensor(np.zeros((4, 4))), x).item() == 0.0


def test_dirichlet_constant_signal():
    a = _sym(np.random.default_rng(0), 5)
    x = np.tile([1.0, -2.0, 0.5], (5, 1))
    assert dirichlet_energy(Tensor(a), x).item() == pytest.approx(0.0, abs=1e-14)


def test_dirichlet_two_nodes():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    x = np.array([[0.0], [2.0]])
    assert dirichlet_oracle(a, x) == 1.0
    assert dirichlet_energy(Tensor(a), x).item() == pytest.approx(1.0, rel=1e-15)


def test_dirichlet_rejects_asymmetric():
    with pytest.raises(ContractError):
        dirichlet_energy(Tensor([[0.0, 1.0], [0.0, 0.0]]), np.ones((2, 1)))


def test_large_directed_graph_rejected():
    r = np.random.default_rng(0)
    a = r.uniform(size=(400, 400))
    a = a + a.T
    dirichlet_energy(Tensor(a), np.ones((400, 1)))  # symmetric passes
    a[0, 7] += 1.0  # row 0 is always probed
    with pytest.raises(ContractError):
        dirichlet_energy(Tensor(a), np.ones((400, 1)))
    directed = np.triu(r.uniform(size=(400, 400)), 1)
    with pytest.raises(ContractError):
        dirichlet_energy(Tensor(directed), np.ones((400, 1)))


def test_trace_form_matches_double_loop():
    r = np.random.default_rng(42)
    for _ in range(100):
        n, d = r.integers(2, 9), r.integers(1, 5)
        a, x = _sym(r, n), r.normal(size=(n, d))
        got = dirichlet_energy(Tensor(a), x).item()
        want = dirichlet_oracle(a, x)
        assert got >= -1e-15
        assert abs(got - want) <= 1e-10 * want + 1e-15


def test_connectivity_sparsity_values():
    assert connectivity_sparsity(Tensor(np.eye(3)), 0.0, 0.0).item() == 0.0
    assert connectivity_sparsity(Tensor(np.eye(2)), 0.0, 1.0).item() == pytest.approx(0.5, rel=1e-15)
    stochastic = np.array([[0.2, 0.8], [0.8, 0.2]])
    assert connectivity_sparsity(Tensor(stochastic), 1.0, 0.0).item() == pytest.approx(0.0, abs=1e-15)


def test_log_barrier_direct_formula():
    r = np.random.default_rng(3)
    a = _sym(r, 6, 0.8) + np.eye(6)
    beta, gamma = 0.3, 0.7
    want = -beta / 6 * np.sum(np.log(a.sum(axis=1))) + gamma / 36 * np.sum(a * a)
    assert connectivity_sparsity(Tensor(a), beta, gamma).item() == pytest.approx(want, rel=1e-13)


def test_log_barrier_floors_zero_degree():
    val = connectivity_sparsity(Tensor(np.zeros((3, 3))), 1.0, 0.0).item()
    assert np.isfinite(val)
    assert val == pytest.approx(-np.log(1e-12), rel=1e-12)


def test_log_barrier_monotone_in_degree():
    r = np.random.default_rng(5)
    a = _sym(r, 5) + 0.1 * np.eye(5)
    base = connectivity_sparsity(Tensor(a), 1.0, 0.0).item()
    for i in range(5):
        b = a.copy()
        b[i, i] += 0.5
        assert connectivity_sparsity(Tensor(b), 1.0, 0.0).item() < base


def test_graph_reg_loss_combination():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    x = np.array([[0.0], [2.0]])
    w = GraphRegWeights(alpha=1.0, beta=0.0, gamma=1.0)
    want = dirichlet_oracle(a, x) + np.sum(a * a) / 4
    assert graph_reg_loss(Tensor(a), x, w).item() == pytest.approx(want, rel=1e-15)
    assert graph_reg_loss(Tensor(a), x, GraphRegWeights()).item() == 0.0
    big = graph_reg_loss(Tensor(np.zeros((2, 2))), x, GraphRegWeights(beta=1.0)).item()
    assert 20 < big < np.inf


def test_weights_must_be_nonnegative():
    with pytest.raises(ContractError):
        GraphRegWeights(alpha=-1.0)


def test_regulariser_gradients():
    r = np.random.default_rng(9)
    # probes perturb single entries, so build A symmetric from a free matrix b
    b = Tensor(_sym(r, 6, 0.9) + np.eye(6), requires_grad=True)
    x = Tensor(r.normal(size=(6, 3)), requires_grad=True)

    def a():
        return ops.scale(b + b.T, 0.5)

    assert grad_check(lambda: dirichlet_energy(a(), x), [b, x], samples=None) <= 1e-6
    assert grad_check(lambda: connectivity_sparsity(b, 0.4, 0.3), [b], samples=None) <= 1e-6
    w = GraphRegWeights(0.2, 0.1, 0.3)
    assert grad_check(lambda: graph_reg_loss(a(), x, w), [b, x], samples=None) <= 1e-6


def test_dirichlet_gradient_wrt_a_is_symmetric_pairwise_distance():
    # d Omega / d A_ij = (||x_i||^2 - x_i . x_j) / n^2, whose symmetric part is ||x_i - x_j||^2 / 2n^2
    r = np.random.default_rng(1)
    a = Tensor(_sym(r, 4), requires_grad=True)
    x = r.normal(size=(4, 2))
    with Tape() as tape:
        loss = dirichlet_energy(a, x)
    backward(tape, loss)
    sym = 0.5 * (a.grad + a.grad.T)
    dist = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(sym, dist / (2 * 16), atol=1e-14)
