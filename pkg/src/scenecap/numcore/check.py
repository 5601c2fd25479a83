"""Central finite-difference gradient checking."""
import numpy as np

from .tensor import Tape, Tensor, gradients


def _scalar(value):
    return float(value.data) if isinstance(value, Tensor) else float(value)


class NonDeterministicError(RuntimeError):
    pass


def finite_diff_check(f, params, h=1e-5, grads=None, stencil=2):
    """Max coordinate-wise relative error between analytic and numeric gradients.

    ``f`` maps a ``name -> Tensor`` dict to a scalar.  When ``grads`` is not
    given the analytic gradient is taken from the tape.  The relative error
    of one coordinate is ``|a - d| / max(|a|, |d|, 1e-12)``.

    ``stencil=2`` is the classic ``(f(x+h) - f(x-h)) / 2h``; ``stencil=4``
    uses the fourth-order central difference, which tolerates a larger
    ``h`` and so loses fewer digits to cancellation on O(10) losses.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if stencil not in (2, 4):
        raise ValueError("stencil must be 2 or 4")
    params = {k: v if isinstance(v, Tensor) else Tensor(v, requires_grad=True)
              for k, v in params.items()}
    if grads is None:
        with Tape():
            loss = f(params)
            grads = gradients(loss, params)
    if _scalar(f(params)) != _scalar(f(params)):
        raise NonDeterministicError("f returned different values for identical inputs")

    worst = 0.0
    for name, p in params.items():
        a_all = np.asarray(grads[name].data if isinstance(grads[name], Tensor) else grads[name])
        base = p.data
        def at(idx, delta):
            moved = base.copy()
            moved[idx] += delta
            return _scalar(f({**params, name: Tensor(moved)}))

        for idx in np.ndindex(base.shape):
            d1 = at(idx, h) - at(idx, -h)
            if stencil == 2:
                d = d1 / (2.0 * h)
            else:
                # differences first: a parameter f ignores must give exactly 0
                d2 = at(idx, 2 * h) - at(idx, -2 * h)
                d = (8.0 * d1 - d2) / (12.0 * h)
            a = float(a_all[idx])
            err = abs(a - d) / max(abs(a), abs(d), 1e-12)
            worst = max(worst, err)
    return worst
