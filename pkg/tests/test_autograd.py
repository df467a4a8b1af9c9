import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventqa import autograd as ag
from eventqa.autograd import GradientError, NumericError, ShapeError, Tensor, no_grad
from eventqa.gradcheck import InvalidCheck, grad_check


def param(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def test_matmul_value():
    out = ag.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_softmax_symmetric():
    np.testing.assert_allclose(ag.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_cosine_orthogonal():
    assert ag.cosine_similarity(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == 0.0


def test_shape_mismatch_is_descriptive():
    with pytest.raises(ShapeError, match="inner dimensions"):
        ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ag.add(Tensor(np.ones(3)), Tensor(np.ones(4)))


def test_non_finite_input_rejected():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        ag.log(Tensor([0.0]))


def test_square_gradient():
    x = param(3.0)
    (x * x).backward()
    assert x.grad == pytest.approx(6.0)


def test_sum_of_product_gradient():
    rng = np.random.default_rng(0)
    a, b = param(rng.standard_normal((3, 4))), param(rng.standard_normal((4, 2)))
    ag.sum_(ag.matmul(a, b)).backward()
    assert a.grad.shape == (3, 4)
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ np.ones((3, 2)))


def test_backward_needs_scalar():
    x = param([1.0, 2.0])
    with pytest.raises(GradientError):
        ag.scale(x, 2.0).backward()


def test_gradients_accumulate_until_reset():
    x = param(2.0)
    (x * x).backward()
    (x * x).backward()
    assert x.grad == pytest.approx(8.0)
    x.zero_grad()
    (x * x).backward()
    assert x.grad == pytest.approx(4.0)


def test_no_grad_records_nothing():
    x = param(1.0)
    with no_grad():
        y = x * x
    assert not y.requires_grad


def test_exp_grad_check():
    x = param([0.0])
    rep = grad_check(lambda: ag.sum_(ag.exp(x)), [x], tol=1e-4)
    assert rep.passed
    x.grad = None
    ag.sum_(ag.exp(x)).backward()
    assert x.grad[0] == pytest.approx(1.0)


def test_grad_check_rejects_nondeterminism():
    x = param([1.0])
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidCheck):
        grad_check(lambda: ag.sum_(x * float(rng.random())), [x])


@pytest.mark.parametrize("seed", range(5))
def test_random_chain_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a = param(rng.standard_normal((3, 4)))
    w = param(rng.standard_normal((4, 5)))
    g = param(rng.uniform(0.5, 1.5, 5))
    bta = param(rng.standard_normal(5))

    def f():
        h = ag.layer_norm(ag.tanh(ag.matmul(a, w)), g, bta)
        p = ag.softmax(h, axis=-1)
        return ag.mean(ag.log(p + 0.1))

    assert grad_check(f, [a, w, g, bta], tol=1e-4, max_entries=None).passed


def test_primitive_zoo_grad_check():
    rng = np.random.default_rng(3)
    x = param(rng.standard_normal((2, 3, 4)))
    y = param(rng.standard_normal((2, 4, 3)))
    e = param(rng.standard_normal((6, 4)))
    ids = np.array([[0, 5, 2], [1, 1, 3]])

    def f():
        emb = ag.embedding(e, ids)                       # (2, 3, 4)
        z = ag.concat([x, emb], axis=1)                  # (2, 6, 4)
        m = ag.matmul(z, y)                              # (2, 6, 3)
        m = ag.transpose(m, (0, 2, 1))                   # (2, 3, 6)
        r = ag.reshape(m, (6, 6))
        lse = ag.logsumexp(r, axis=1, mask=np.tri(6, dtype=bool))
        lp = ag.pick(ag.log_softmax(r, axis=-1), np.arange(6) % 6)
        c = ag.cosine_matrix(ag.take_rows(ag.reshape(z, (12, 4)), [0, 3, 7]), e)
        gl = ag.gelu(r[:, 1:4])
        return ag.sum_(lse) + ag.mean(lp) + ag.sum_(c * c) + ag.mean(ag.relu(gl) + ag.exp(ag.scale(gl, 0.1)))

    assert grad_check(f, [x, y, e], tol=1e-4, max_entries=None).passed


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_backward_is_linear_in_the_loss(seed):
    rng = np.random.default_rng(seed)
    w = param(rng.standard_normal((3, 3)))
    x = Tensor(rng.standard_normal((4, 3)))

    def l1():
        return ag.sum_(ag.tanh(ag.matmul(x, w)))

    def l2():
        return ag.mean(ag.softmax(ag.matmul(x, w), axis=-1) * ag.matmul(x, w))

    l1().backward()
    g1 = w.grad.copy()
    w.grad = None
    l2().backward()
    g2 = w.grad.copy()
    w.grad = None
    (l1() + l2()).backward()
    np.testing.assert_allclose(w.grad, g1 + g2, atol=1e-10, rtol=0)


def test_fixed_seed_gives_identical_values_and_gradients():
    def run():
        rng = np.random.default_rng(11)
        w = param(rng.standard_normal((5, 5)))
        x = Tensor(rng.standard_normal((7, 5)))
        loss = ag.mean(ag.dropout(ag.relu(ag.matmul(x, w)), 0.3, rng, True))
        loss.backward()
        return loss.data.copy(), w.grad.copy()

    (l1, g1), (l2, g2) = run(), run()
    assert l1.tobytes() == l2.tobytes() and g1.tobytes() == g2.tobytes()
