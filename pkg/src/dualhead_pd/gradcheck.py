"""Finite-difference checks for every layer type and the full training
objective, run at float64 on small random shapes."""

import numpy as np

from . import losses
from . import numerics as nx
from .model import AblationSwitches, LanguageRegistry, Model, ModelConfig, TaskType
from .model import adaptive_layer, attention_pool, bottleneck, head_forward

TOLERANCE = 1e-4


def _p(rng, name, *shape, scale=1.0):
    return nx.Param(name, scale * rng.standard_normal(shape))


def _readout(rng, shape):
    """Fixed random projection turning any output into a scalar."""
    return rng.standard_normal(shape)


def _scalar(out, r):
    return nx.sum(out * r)


def check_dense(rng):
    x, w, b = _p(rng, "x", 3, 4), _p(rng, "w", 4, 2), _p(rng, "b", 2)
    r = _readout(rng, (3, 2))
    return nx.grad_check(lambda ps: _scalar(nx.dense(*ps), r), [x, w, b])


def check_conv1d(rng):
    x, w, b = _p(rng, "x", 2, 7, 3), _p(rng, "w", 3, 3, 2), _p(rng, "b", 2)
    r = _readout(rng, (2, 7, 2))
    return nx.grad_check(lambda ps: _scalar(nx.conv1d(*ps), r), [x, w, b])


def check_layer_norm(rng):
    x, g, b = _p(rng, "x", 3, 5), _p(rng, "g", 5), _p(rng, "b", 5)
    r = _readout(rng, (3, 5))
    return nx.grad_check(lambda ps: _scalar(nx.layer_norm(*ps), r), [x, g, b])


def check_time_standardize(rng):
    x = _p(rng, "x", 2, 6, 3)
    r = _readout(rng, (2, 6, 3))
    return nx.grad_check(lambda ps: _scalar(nx.time_standardize(ps[0]), r), [x])


def check_activations(rng):
    x = _p(rng, "x", 4, 5)
    r = _readout(rng, (4, 5))
    worst = 0.0
    for fn in (nx.relu, nx.sigmoid, lambda t: nx.softmax(t, axis=-1), lambda t: nx.softmax(t, axis=0)):
        worst = max(worst, nx.grad_check(lambda ps: _scalar(fn(ps[0]), r), [x]))
    return worst


def check_adaptive_layer(rng):
    e, d, t = 3, 4, 5
    ps = [
        _p(rng, "embedding", 2, e),
        _p(rng, "g_w", e, d),
        _p(rng, "g_b", d),
        _p(rng, "h_w", e, d),
        _p(rng, "h_b", d),
        _p(rng, "z", 2, t, d),
    ]
    r = _readout(rng, (2, t, d))
    lang = np.array([1, 0])

    def f(ps):
        p = dict(zip(("embedding", "g_w", "g_b", "h_w", "h_b"), ps[:5]))
        return _scalar(adaptive_layer(ps[5], lang, p), r)

    return nx.grad_check(f, ps)


def check_bottleneck(rng):
    d, mid, t = 4, 2, 6
    ps = [_p(rng, "w1", 3, d, mid), _p(rng, "b1", mid), _p(rng, "w2", 3, mid, d), _p(rng, "b2", d), _p(rng, "z", 2, t, d)]
    r = _readout(rng, (2, t, d))

    def f(ps):
        return _scalar(bottleneck(ps[4], dict(zip(("w1", "b1", "w2", "b2"), ps[:4]))), r)

    return nx.grad_check(f, ps)


def check_attention_pool(rng):
    z, q = _p(rng, "z", 2, 5, 3), _p(rng, "q", 3)
    r = _readout(rng, (2, 3))
    return nx.grad_check(lambda ps: _scalar(attention_pool(ps[0], ps[1])[0], r), [z, q])


def check_head(rng):
    d, h = 4, 3
    ps = [_p(rng, "fc1_w", d, h), _p(rng, "fc1_b", h), _p(rng, "fc2_w", h, 1), _p(rng, "fc2_b", 1), _p(rng, "x", 3, d)]
    r = _readout(rng, (3,))

    def f(ps):
        head = dict(zip(("fc1_w", "fc1_b", "fc2_w", "fc2_b"), ps[:4]))
        return _scalar(head_forward(ps[4], head), r)

    return nx.grad_check(f, ps)


def check_losses(rng):
    emb = _p(rng, "emb", 6, 3)
    labels = np.array([0, 1, 0, 1, 1, 0])
    logits = _p(rng, "logits", 6)

    def f(ps):
        c = losses.contrastive_loss(ps[0], labels, losses.ContrastiveConfig(m_pos=0.0, m_neg=10.0))
        return c + losses.bce_loss(nx.sigmoid(ps[1]), labels)

    return nx.grad_check(f, [emb, logits])


def tiny_model(seed, switches=None):
    cfg = ModelConfig(d_ssl=4, d_wav=6, hidden=5, r=2, k=3, emb_dim=3)
    model = Model(cfg, LanguageRegistry(["a", "b"]), switches, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1000)
    for p in model.params.values():
        # nonzero queries and moderate weights so every path carries gradient
        p.value[...] = p.value + 0.3 * rng.standard_normal(p.shape)
    return model


def tiny_batch(seed, n=4, t=5):
    rng = np.random.default_rng(seed + 2000)
    ssl = [rng.standard_normal((t, 4)) for _ in range(n)]
    wav = [rng.standard_normal((t, 6)) for _ in range(n)]
    lang = np.array([i % 2 for i in range(n)])
    tasks = [TaskType.DDK if i < n // 2 else TaskType.CONTINUOUS for i in range(n)]
    labels = np.array([i % 2 for i in range(n)])
    return ssl, wav, lang, tasks, labels


def check_full_model(rng):
    seed = int(rng.integers(1 << 30))
    model = tiny_model(seed)
    ssl, wav, lang, tasks, labels = tiny_batch(seed)
    cfg = losses.ContrastiveConfig(m_pos=0.0, m_neg=10.0)

    def f(_):
        outs = model.forward_batch(ssl, wav, lang, tasks)
        return losses.total_loss(outs, labels, cfg)[0]

    return nx.grad_check(f, list(model.params.values()))


CHECKS = {
    "dense": check_dense,
    "conv1d": check_conv1d,
    "layer_norm": check_layer_norm,
    "time_standardize": check_time_standardize,
    "activations": check_activations,
    "adaptive_layer": check_adaptive_layer,
    "bottleneck": check_bottleneck,
    "attention_pool": check_attention_pool,
    "head": check_head,
    "losses": check_losses,
    "full_model": check_full_model,
}


def run(seeds=20, layers=None):
    """Worst relative error per layer over ``seeds`` random draws."""
    results = {}
    with nx.precision(np.float64):
        for name in layers or CHECKS:
            results[name] = max(CHECKS[name](np.random.default_rng([seed, 99])) for seed in range(seeds))
    return results
