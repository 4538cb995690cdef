import numpy as np
import pytest

from robusthash import netcore


def random_net(rng, max_width=8, n_layers=None):
    n_layers = n_layers or int(rng.integers(2, 4))
    sizes = [int(rng.integers(2, max_width + 1)) for _ in range(n_layers)]
    return netcore.init_network(sizes, seed=int(rng.integers(1 << 31))), sizes


def finite_diff_input(net, x, upstream, step=1e-5):
    grad = np.empty_like(x)
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[j] += step
        xm[j] -= step
        grad[j] = (
            upstream @ netcore.forward(net, xp).output
            - upstream @ netcore.forward(net, xm).output
        ) / (2 * step)
    return grad


def finite_diff_params(net, x, upstream, step=1e-5):
    grads = []
    for li, layer in enumerate(net.layers):
        gw = np.empty_like(layer.weights)
        gb = np.empty_like(layer.biases)
        for idx in np.ndindex(layer.weights.shape):
            wp = net.copy()
            wm = net.copy()
            wp.layers[li].weights[idx] += step
            wm.layers[li].weights[idx] -= step
            gw[idx] = (
                upstream @ netcore.forward(wp, x).output
                - upstream @ netcore.forward(wm, x).output
            ) / (2 * step)
        for j in range(layer.biases.size):
            bp = net.copy()
            bm = net.copy()
            bp.layers[li].biases[j] += step
            bm.layers[li].biases[j] -= step
            gb[j] = (
                upstream @ netcore.forward(bp, x).output
                - upstream @ netcore.forward(bm, x).output
            ) / (2 * step)
        grads.append((gw, gb))
    return grads


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in range(1, 11):
        if criterion in RESULTS:
            name, ok, detail = RESULTS[criterion]
            verdict = "PASS" if ok else "FAIL"
            terminalreporter.write_line(
                f"[{criterion:2d}] {name}: {verdict} ({detail})")
        else:
            terminalreporter.write_line(
                f"[{criterion:2d}] not run (errored before verdict)")
