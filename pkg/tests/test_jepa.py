import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_config, synthetic_frame
from oracles import huber_scalar
from timecapsule.config import JepaConfig
from timecapsule.jepa import JepaState, ema_update, jepa_loss, preprocess_target
from timecapsule.model import TimeCapsule
from timecapsule.nn import autograd as ag
from timecapsule.nn.layers import Parameter
from timecapsule.training import train

rng = np.random.default_rng(3)


def test_preprocess_identity():
    y = rng.standard_normal((3, 8, 1))
    np.testing.assert_array_equal(preprocess_target(y, 8), y)


def test_preprocess_zero_pad_tail():
    y = rng.standard_normal((3, 4, 1))
    out = preprocess_target(y, 8)
    np.testing.assert_array_equal(out[:, :4], y)
    np.testing.assert_array_equal(out[:, 4:], 0.0)


def test_preprocess_chunk_endpoints():
    y = rng.standard_normal((2, 3, 16, 1))
    np.testing.assert_array_equal(preprocess_target(y, 8, beta=0.0), y[..., 8:, :])
    np.testing.assert_array_equal(preprocess_target(y, 8, beta=1.0), y[..., :8, :])


def test_preprocess_partial_chunk_recurrence():
    y = rng.standard_normal((2, 20, 1))
    c1, c2 = y[:, :8], y[:, 8:16]
    c3 = np.concatenate([y[:, 16:], np.zeros((2, 4, 1))], axis=1)
    s = c1
    for c in (c2, c3):
        s = 0.9 * s + 0.1 * c
    np.testing.assert_allclose(preprocess_target(y, 8, 0.9), s, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(t_y=st.integers(1, 50), t_x=st.integers(1, 12))
def test_preprocess_length(t_y, t_x):
    assert preprocess_target(np.ones((2, t_y, 1)), t_x).shape == (2, t_x, 1)


def test_preprocess_errors():
    with pytest.raises(ValueError):
        preprocess_target(np.ones((2, 4, 1)), 0)


def test_ema_endpoints_and_recurrence():
    online = [Parameter(np.array([1.0, -2.0]))]
    target = [Parameter(np.zeros(2))]
    ema_update(target, online, 1.0)
    np.testing.assert_array_equal(target[0].data, 0.0)
    ema_update(target, online, 0.0)
    np.testing.assert_array_equal(target[0].data, online[0].data)

    tau = 0.999
    t, o = [Parameter(np.array([0.0]))], [Parameter(np.array([1.0]))]
    ref = 0.0
    for online_value in (1.0, 3.0):
        o[0].data[:] = online_value
        ema_update(t, o, tau)
        ref = tau * ref + (1 - tau) * online_value
    # 0.999 * 0.001 + 0.001 * 3
    assert t[0].data[0] == pytest.approx(ref, abs=1e-15)
    assert ref == pytest.approx(0.003999, abs=1e-15)


def test_ema_shape_mismatch():
    with pytest.raises(ValueError):
        ema_update([Parameter(np.zeros(2))], [Parameter(np.zeros(3))], 0.5)
    with pytest.raises(ValueError):
        ema_update([Parameter(np.zeros(2))], [], 0.5)


def test_jepa_loss_equal_inputs():
    x = Parameter(rng.standard_normal((2, 2, 4, 2)))
    loss = jepa_loss(x, x.data.copy())
    assert float(loss.data) == 0.0
    loss.backward()
    np.testing.assert_array_equal(x.grad, 0.0)


def test_jepa_loss_matches_scalar_oracle():
    p, t = rng.standard_normal((2, 2, 4, 2)) * 2, rng.standard_normal((2, 2, 4, 2))
    expected = np.mean([huber_scalar(a - b, 1.0) for a, b in zip(p.ravel(), t.ravel())])
    assert abs(float(jepa_loss(ag.Tensor(p), ag.Tensor(t)).data) - expected) < 1e-12
    l2 = float(jepa_loss(ag.Tensor(p), ag.Tensor(t), "l2").data)
    assert l2 == pytest.approx(np.mean((p - t) ** 2), abs=1e-12)
    with pytest.raises(ValueError):
        jepa_loss(ag.Tensor(p), ag.Tensor(t[:1]))


def test_stop_gradient_leaves_target_encoder_untouched():
    cfg = small_config().model
    model = TimeCapsule(cfg)
    state = JepaState(model.encoder, JepaConfig())
    x = rng.standard_normal((2, 3, 32, 1))
    y = rng.standard_normal((2, 3, 8, 1))
    out = model(x, training=True)
    loss = state.loss(out, y, cfg.t_x, cfg.revin_eps)
    loss.backward()
    for p in state.target.parameters():
        assert p.grad is None or not np.any(p.grad)
    online = [p for n, p in model.named_parameters() if n.startswith("encoder.")]
    assert any(p.grad is not None and np.any(p.grad) for p in online)
    # deepcopy shares no buffers with the online encoder
    for t, o in zip(state.target.parameters(), model.encoder.parameters()):
        assert t.data is not o.data


def test_target_untouched_by_optimizer_only_by_ema(frame):
    cfg = small_config(train__epochs=1, jepa__momentum=1.0)
    model_before = TimeCapsule(cfg.model, seed=cfg.train.seed).encoder.state_dict()
    res = train(cfg, frame=frame, evaluate_test=False)
    # momentum 1 freezes the target, so it must still equal the initial encoder
    for name, value in res.jepa.target.state_dict().items():
        np.testing.assert_array_equal(value, model_before[name])


def test_weight_zero_is_bitwise_identical_to_disabled():
    frame = synthetic_frame()
    a = train(small_config(jepa__weight=0.0), frame=frame, evaluate_test=False)
    b = train(small_config(jepa__enabled=False), frame=frame, evaluate_test=False)
    sa, sb = a.model.state_dict(), b.model.state_dict()
    assert sa.keys() == sb.keys()
    for k in sa:
        assert np.array_equal(sa[k], sb[k]), k
    assert [r["val_mse"] for r in a.logs] == [r["val_mse"] for r in b.logs]
    # the logged curve exists only when enabled
    assert all(np.isfinite(r["jepa_loss"]) for r in a.logs)
    assert all(np.isnan(r["jepa_loss"]) for r in b.logs)
