"""Central-difference gradient checks for layers and losses."""
import numpy as np


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / scale


def numeric_grad(f, x, h=1e-3):
    """d f / d x for scalar ``f`` of the array ``x`` (perturbed in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def check_layer(layer, x, rng, h=1e-3):
    """Worst relative error over the input and every parameter of ``layer``."""
    out = layer.forward(x)
    proj = rng.normal(size=out.shape)

    def loss():
        return float(np.sum(layer.forward(x) * proj))

    layer.forward(x)
    dx = layer.backward(proj)
    errs = {"input": rel_err(dx, numeric_grad(loss, x, h))}
    for name, p in layer.params.items():
        analytic = layer.grads[name].copy()
        errs[name] = rel_err(analytic, numeric_grad(loss, p, h))
    return errs
