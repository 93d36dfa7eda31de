import numpy as np
import pytest
import torch

from minwm.autodiff import ParamSet, adam_step, backward, ema_update, load_checkpoint, save_checkpoint


def finite_diff_grad(f, params, h=1e-3):
    """Central finite differences of a scalar function of a list of tensors."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.reshape(-1)
            gf = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                hi = f()
                flat[i] = orig - h
                lo = f()
                flat[i] = orig
                gf[i] = (hi - lo) / (2 * h)
            grads.append(g)
    return grads


def make_mlp_loss(seed, sizes=(5, 7, 4, 1)):
    g = torch.Generator().manual_seed(seed)
    params = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        params.append(torch.randn(a, b, generator=g, dtype=torch.float64, requires_grad=True))
        params.append(torch.randn(b, generator=g, dtype=torch.float64, requires_grad=True))
    x = torch.randn(3, sizes[0], generator=g, dtype=torch.float64)

    def loss():
        h = x
        for w, bias in zip(params[0::2], params[1::2]):
            h = torch.tanh(h @ w + bias)
        return (h ** 2).mean()

    return loss, params


def test_simple_derivatives():
    x = torch.tensor(3.0, requires_grad=True)
    backward(x * x)
    assert x.grad.item() == pytest.approx(6.0)

    y = torch.tensor(2.0, requires_grad=True)
    backward(torch.tensor(5.0) + 0.0 * y)
    assert y.grad.item() == 0.0


def test_nonscalar_loss_rejected():
    x = torch.ones(3, requires_grad=True)
    with pytest.raises(ValueError):
        backward(x * 2)


def test_gradient_accumulation():
    x = torch.tensor(1.5, requires_grad=True)
    backward(x * x)
    backward(x * x)
    assert x.grad.item() == pytest.approx(6.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mlp_matches_finite_differences(seed):
    loss, params = make_mlp_loss(seed)
    val = loss()
    val.backward()
    fd = finite_diff_grad(loss, params)
    for p, g in zip(params, fd):
        denom = max(g.abs().max().item(), 1e-6)
        assert (p.grad - g).abs().max().item() / denom < 1e-4


def test_forward_determinism():
    loss1, _ = make_mlp_loss(7)
    loss2, _ = make_mlp_loss(7)
    assert loss1().item() == loss2().item()


def test_adam_zero_grad_no_move():
    p = torch.tensor([1.0, -2.0])
    ps = ParamSet({"w": p})
    adam_step(ps, {"w": torch.zeros(2)}, {}, lr=0.1)
    assert torch.equal(ps.params["w"], torch.tensor([1.0, -2.0]))


def test_adam_first_step_is_lr_sign():
    p = torch.tensor([0.5])
    ps = ParamSet({"w": p})
    adam_step(ps, {"w": torch.ones(1)}, {}, lr=0.1)
    assert ps.params["w"].item() == pytest.approx(0.4, abs=1e-6)


def test_adam_monotone_under_fixed_grad():
    # hand-simulated scalar Adam: two identical calls keep moving against sign(g)
    p = torch.tensor([0.0])
    ps = ParamSet({"w": p})
    state = {}
    vals = [p.item()]
    for _ in range(3):
        adam_step(ps, {"w": torch.ones(1)}, state, lr=0.05)
        vals.append(ps.params["w"].item())
    assert all(b < a for a, b in zip(vals[:-1], vals[1:]))


def test_adam_shape_mismatch():
    ps = ParamSet({"w": torch.zeros(3)})
    with pytest.raises(ValueError):
        adam_step(ps, {"w": torch.zeros(4)}, {}, lr=0.1)


def test_ema_endpoints():
    params = {"w": torch.tensor([1.0])}
    shadow = {"w": torch.tensor([0.0])}
    assert ema_update(params, shadow, 1.0)["w"].item() == 0.0
    assert ema_update(params, shadow, 0.0)["w"].item() == 1.0
    assert ema_update(params, shadow, 0.99)["w"].item() == pytest.approx(0.01)
    with pytest.raises(ValueError):
        ema_update(params, shadow, 1.5)


def test_ema_shadow_outside_grad_graph():
    p = torch.tensor([2.0], requires_grad=True)
    ps = ParamSet({"w": p})
    ps.init_ema()
    ps.ema_update(0.9)
    assert not ps.ema_shadow["w"].requires_grad
    loss = (p * 3).sum()
    loss.backward()
    assert ps.ema_shadow["w"].grad is None


def test_checkpoint_roundtrip(tmp_path):
    torch.manual_seed(0)
    net = torch.nn.Linear(4, 3)
    path = tmp_path / "m.mwm"
    save_checkpoint(path, net, stage="bidir", ema_shadow={"weight": net.weight.detach() * 0.5})
    state, ema, meta = load_checkpoint(path)
    assert meta["stage"] == "bidir"
    assert np.allclose(state["weight"].numpy(), net.weight.detach().numpy())
    assert np.allclose(ema["weight"].numpy(), net.weight.detach().numpy() * 0.5)
