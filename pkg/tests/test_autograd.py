import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import attention_loops, huber_scalar, matmul_loops
from timecapsule.nn import autograd as ag
from timecapsule.nn.autograd import Tensor
from timecapsule.nn.gradcheck import check_function, grad_check
from timecapsule.nn.layers import (
    Linear,
    Module,
    MultiHeadSelfAttention,
    Parameter,
    TransformerLayer,
    linear,
)
from timecapsule.nn.optim import AdamW

rng = np.random.default_rng(7)


# backward ---------------------------------------------------------------

def test_sum_gradient_is_ones():
    p = Parameter(rng.standard_normal((3, 4)))
    p.sum().backward()
    np.testing.assert_array_equal(p.grad, np.ones((3, 4)))


def test_zero_times_param():
    p = Parameter(rng.standard_normal(5))
    (p * 0.0).sum().backward()
    np.testing.assert_array_equal(p.grad, np.zeros(5))


def test_unreachable_parameter_has_no_gradient():
    a, b = Parameter(np.ones(3)), Parameter(np.ones(3))
    (a * 2.0).sum().backward()
    assert b.grad is None


def test_stop_gradient_blocks():
    p = Parameter(rng.standard_normal(4))
    q = Parameter(rng.standard_normal(4))
    ((p * q.detach()).sum()).backward()
    assert q.grad is None
    np.testing.assert_array_equal(p.grad, q.data)


def test_shared_node_visited_once():
    p = Parameter(np.array([2.0]))
    h = p * p
    (h + h * 3.0).sum().backward()
    # d/dp 4 p^2 = 8p
    np.testing.assert_allclose(p.grad, [16.0])


def test_backward_errors():
    p = Parameter(np.ones(3))
    with pytest.raises(ValueError):
        (p * 2.0).backward()
    with pytest.raises(RuntimeError):
        Tensor(np.ones(1)).backward()


def test_composite_matches_finite_differences():
    def f(a, b):
        return (ag.gelu(a @ b) * ag.softmax(a @ b)).sum()

    assert check_function(f, rng.standard_normal((3, 4)), rng.standard_normal((4, 5))) < 1e-5


# linear ----------------------------------------------------------------

def test_linear_identity_and_zero_input():
    x = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(linear(x, Tensor(np.eye(4)), Tensor(np.zeros(4))).data, x)
    b = rng.standard_normal(2)
    out = linear(np.zeros((3, 4)), Tensor(rng.standard_normal((4, 2))), Tensor(b)).data
    np.testing.assert_array_equal(out, np.tile(b, (3, 1)))


def test_linear_matches_loops():
    x, w, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng.standard_normal(2)
    out = linear(x, Tensor(w), Tensor(b)).data
    assert np.max(np.abs(out - (matmul_loops(x, w) + b))) < 1e-12


def test_linear_shape_error():
    with pytest.raises(ValueError):
        linear(np.zeros((3, 4)), Tensor(np.zeros((5, 2))))


def test_linear_layer_param_count():
    layer = Linear("l", 4, 3, seed=0)
    assert sum(p.data.size for p in (layer.weight, layer.bias)) == 15


# attention -------------------------------------------------------------

def _mha_arrays(m):
    return [m.q.weight.data, m.q.bias.data, m.k.weight.data, m.k.bias.data, m.v.weight.data,
            m.v.bias.data, m.out.weight.data, m.out.bias.data]


def test_attention_matches_loop_oracle():
    m = MultiHeadSelfAttention("a", 8, 2, seed=3)
    x = rng.standard_normal((4, 8))
    out = m(Tensor(x)).data
    assert np.max(np.abs(out - attention_loops(x, *_mha_arrays(m), heads=2))) < 1e-10


def test_single_token_attention():
    m = MultiHeadSelfAttention("a", 8, 4, seed=1)
    x = Tensor(rng.standard_normal((1, 8)))
    np.testing.assert_array_equal(m.attention_weights(x).data, np.ones((4, 1, 1)))
    np.testing.assert_allclose(m(x).data, m.out(m.v(x)).data, atol=1e-14)


def test_identical_tokens_identical_rows():
    m = MultiHeadSelfAttention("a", 8, 2, seed=1)
    row = rng.standard_normal(8)
    out = m(Tensor(np.stack([row, row, rng.standard_normal(8)]))).data
    np.testing.assert_allclose(out[0], out[1], atol=1e-14)


def test_softmax_rows_and_shift_invariance():
    z = rng.standard_normal((5, 7)) * 10
    s = ag.softmax(Tensor(z)).data
    assert np.max(np.abs(s.sum(axis=-1) - 1)) < 1e-6
    shifted = ag.softmax(Tensor(z + rng.standard_normal((5, 1)) * 100)).data
    np.testing.assert_allclose(s, shifted, atol=1e-12)


def test_heads_must_divide_width():
    with pytest.raises(ValueError):
        MultiHeadSelfAttention("a", 10, 4, seed=0)


# transformer layer -----------------------------------------------------

def _zero_output_projections(layer):
    for lin in (layer.attn.out, layer.ff2):
        lin.weight.data[:] = 0
        lin.bias.data[:] = 0


def test_transformer_layer_identity_when_outputs_zeroed():
    layer = TransformerLayer("t", 8, 2, seed=0)
    _zero_output_projections(layer)
    x = rng.standard_normal((2, 5, 8))
    np.testing.assert_array_equal(layer(Tensor(x)).data, x)


@pytest.mark.parametrize("n,d", [(1, 4), (3, 8), (6, 12)])
def test_transformer_layer_shape(n, d):
    assert TransformerLayer("t", d, 2, seed=0)(Tensor(np.zeros((n, d)))).shape == (n, d)


def test_transformer_layer_input_gradient():
    layer = TransformerLayer("t", 8, 2, seed=0)
    x = Tensor(rng.standard_normal((3, 8)), requires_grad=True)
    assert grad_check(lambda x: layer(x).mean(), [x]) < 1e-5


# huber ----------------------------------------------------------------

def test_huber_zero_and_knee():
    x = rng.standard_normal(10)
    assert float(ag.huber_loss(Tensor(x), Tensor(x), 1.0).data) == 0.0
    delta = 0.7
    val = float(ag.huber_loss(Tensor(np.array([delta])), Tensor(np.zeros(1)), delta).data)
    assert val == pytest.approx(0.5 * delta**2, abs=1e-15)
    assert delta * (delta - 0.5 * delta) == pytest.approx(0.5 * delta**2)


def test_huber_matches_scalar_oracle():
    p, t = rng.standard_normal(50) * 2, rng.standard_normal(50)
    expected = np.mean([huber_scalar(a - b, 1.3) for a, b in zip(p, t)])
    assert abs(float(ag.huber_loss(Tensor(p), Tensor(t), 1.3).data) - expected) < 1e-12


def test_huber_errors():
    with pytest.raises(ValueError):
        ag.huber_loss(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    with pytest.raises(ValueError):
        ag.huber_loss(Tensor(np.zeros(3)), Tensor(np.zeros(3)), 0.0)


# AdamW ----------------------------------------------------------------

def test_adamw_fixed_point_without_gradient_or_decay():
    p = Parameter(rng.standard_normal(4))
    before = p.data.copy()
    opt = AdamW([p], lr=1e-2, weight_decay=0.0)
    for _ in range(3):
        p.grad = np.zeros(4)
        opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_adamw_pure_decay():
    p = Parameter(np.array([2.0, -1.0]))
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_allclose(p.data, [2.0 * (1 - 0.05), -1.0 * (1 - 0.05)], rtol=0, atol=1e-15)


def test_adamw_hand_stepped_quadratic():
    # f(p) = p^2 / 2 so grad = p; two steps by hand from p = 1
    lr, wd, b1, b2, eps = 0.1, 0.01, 0.9, 0.999, 1e-8
    p_ref, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        g = p_ref
        p_ref *= 1 - lr * wd
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p_ref -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    p = Parameter(np.array([1.0]))
    opt = AdamW([p], lr=lr, betas=(b1, b2), eps=eps, weight_decay=wd)
    for _ in range(2):
        opt.zero_grad()
        (p * p * 0.5).sum().backward()
        opt.step()
    assert p.data[0] == pytest.approx(p_ref, abs=1e-15)
    # first step by hand: 0.999 - 0.1 / (1 + 1e-8)
    p1 = Parameter(np.array([1.0]))
    opt1 = AdamW([p1], lr=lr, betas=(b1, b2), eps=eps, weight_decay=wd)
    p1.grad = np.array([1.0])
    opt1.step()
    assert p1.data[0] == pytest.approx(0.999 - 0.1 / (1 + 1e-8), abs=1e-15)


def test_adamw_errors():
    with pytest.raises(ValueError):
        AdamW([Parameter(np.ones(1))], lr=0.0)
    p = Parameter(np.ones(1))
    with pytest.raises(RuntimeError):
        AdamW([p]).step()


# grad_check -----------------------------------------------------------

def test_grad_check_linear_is_exact():
    w = rng.standard_normal((3, 4))
    assert check_function(lambda a: (a * w).sum(), rng.standard_normal((3, 4))) < 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_grad_check_gelu_random_points(seed):
    r = np.random.default_rng(seed)
    w = r.standard_normal(6)
    assert check_function(lambda a: (ag.gelu(a) * w).sum(), 3 * r.standard_normal(6)) < 1e-5


def test_grad_check_attention_scalar():
    m = MultiHeadSelfAttention("a", 8, 2, seed=5)
    x = Tensor(rng.standard_normal((4, 8)), requires_grad=True)
    assert grad_check(lambda x, *_: m(x).mean(), [x, *m.parameters()]) < 1e-5


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_grad_check_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        check_function(lambda a: ag.div(Tensor(np.ones(1)), a).sum(), np.zeros(1))


def test_module_state_roundtrip():
    layer = TransformerLayer("t", 8, 2, seed=0)
    state = layer.state_dict()
    other = TransformerLayer("t", 8, 2, seed=99)
    other.load_state_dict(state)
    for (n1, p1), (n2, p2) in zip(layer.named_parameters(), other.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)
    with pytest.raises(KeyError):
        other.load_state_dict({})
    assert isinstance(layer, Module)
