import pytest
import torch

from futureplan.encoder import CommandEmbedding, SceneEncoder


def _enc(seed=0):
    torch.manual_seed(seed)
    return SceneEncoder(4, 3, 48, 32, scene_tokens=8, history_tokens=4, channels=8, heads=4)


def test_shapes_and_finite():
    enc = _enc()
    x = torch.rand(2, 3, 4, 48, 48, generator=torch.Generator().manual_seed(1))
    xs, xh = enc(x)
    assert xs.shape == (2, 8, 32) and xh.shape == (2, 4, 32)
    assert torch.isfinite(xs).all() and torch.isfinite(xh).all()


def test_deterministic():
    enc = _enc()
    x = torch.rand(1, 3, 4, 48, 48)
    a, b = enc(x), enc(x)
    assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])


def test_zero_raster_shape_and_determinism():
    enc = _enc()
    z = torch.zeros(1, 3, 4, 48, 48)
    assert torch.equal(enc(z)[0], enc(z)[0])


@pytest.mark.parametrize("shape", [(1, 2, 4, 48, 48), (1, 3, 3, 48, 48), (1, 3, 4, 40, 48), (3, 4, 48, 48)])
def test_shape_mismatch(shape):
    with pytest.raises(ValueError):
        _enc()(torch.zeros(shape))


def test_gradient_finite_difference():
    torch.manual_seed(0)
    enc = SceneEncoder(4, 2, 16, 8, scene_tokens=2, history_tokens=2, channels=4, heads=2).double()
    x = torch.rand(1, 2, 4, 16, 16, dtype=torch.float64)

    def probe():
        xs, xh = enc(x)
        return xs.sum() + xh.sum()

    probe().backward()
    gen = torch.Generator().manual_seed(3)
    worst = 0.0
    for p in enc.parameters():
        v = torch.randn(p.shape, generator=gen, dtype=p.dtype)
        analytic = float((p.grad * v).sum())
        eps = 1e-6
        with torch.no_grad():
            p.add_(eps * v)
            up = float(probe())
            p.sub_(2 * eps * v)
            down = float(probe())
            p.add_(eps * v)
        numeric = (up - down) / (2 * eps)
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8))
    assert worst < 1e-4


def test_command_embedding():
    torch.manual_seed(0)
    emb = CommandEmbedding(6, 16)
    out = emb(torch.tensor([0, 1, 3]))
    assert out.shape == (3, 1, 16)
    assert not torch.equal(out[0], out[1])
    assert torch.equal(emb(torch.tensor([3])), emb(torch.tensor([3])))
    with pytest.raises(ValueError):
        emb(torch.tensor([6]))
    with pytest.raises(ValueError):
        emb(torch.tensor([-1]))
