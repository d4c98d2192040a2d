"""Central finite-difference verification of analytic gradients."""

import numpy as np

from .rng import RngStream


def relative_error(analytic, numeric, floor=1e-8):
    """``|a - n| / max(|a|, |n|)``, defined as 0 when both are below ``floor``."""
    scale = max(abs(analytic), abs(numeric))
    if scale < floor:
        return 0.0
    return abs(analytic - numeric) / scale


def check_gradients(params, closure, h=1e-6, max_per_param=20, floor=1e-8, seed=0):
    """Compare analytic and numeric gradients for a scalar closure.

    ``closure()`` must zero the gradients, run forward and backward, and
    return the loss; it has to be deterministic (freeze any noise inside it).
    Returns the worst relative error over the sampled entries.

    Gradients are compared for the loss divided by ``max(|loss|, 1)`` at the
    check point. Relative errors are unaffected, while the absolute ``floor``
    stays above the round-off of a difference quotient on a large loss, so
    gradients that are exactly zero (a bias feeding batch norm) read as 0.
    """
    scale = max(abs(closure()), 1.0)
    analytic = [p.grad / scale for p in params]
    rng = RngStream(seed, ("gradcheck",))
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.value.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_per_param else rng.permutation(n)[:max_per_param]
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            f_plus = closure()
            flat[i] = old - h
            f_minus = closure()
            flat[i] = old
            numeric = (f_plus - f_minus) / (2 * h * scale)
            worst = max(worst, relative_error(float(grad.reshape(-1)[i]), numeric, floor))
    closure()
    return worst


def grad_check(network, loss_fn, batch, h=1e-6, max_per_param=20, floor=1e-8, seed=0):
    """Finite-difference check of ``network`` under ``loss_fn(output) -> (loss, dout)``.

    The network is converted to float64. Batch norm layers keep using batch
    statistics but stop updating their running averages while checking.
    Dropout must be disabled by the caller (rate 0 or eval mode).
    """
    network.astype(np.float64)
    batch = np.asarray(batch, dtype=np.float64)
    tracking = getattr(network, "set_running_stats_tracking", None)
    if tracking:
        tracking(False)

    def closure():
        network.zero_grad()
        out = network.forward(batch)
        loss, dout = loss_fn(out)
        network.backward(dout)
        return loss

    try:
        return check_gradients(network.parameters(), closure, h, max_per_param, floor, seed)
    finally:
        if tracking:
            tracking(True)
