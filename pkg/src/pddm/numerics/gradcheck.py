"""Central finite-difference gradient checking."""

from dataclasses import dataclass, field

import numpy as np

from .value import NdValue, backward


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    worst_path: str = ""
    worst_index: tuple = ()
    per_path: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.max_rel_error <= self.tol)

    def __bool__(self):
        return self.passed


def relative_error(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _scalar(f):
    out = f()
    return float(out.data.reshape(-1)[0]) if isinstance(out, NdValue) else float(out)


def central_difference(f, flat, i, step):
    orig = flat[i]
    flat[i] = orig + step
    fp = _scalar(f)
    flat[i] = orig - step
    fm = _scalar(f)
    flat[i] = orig
    return (fp - fm) / (2.0 * step)


def numeric_derivative(f, flat, i, steps, agree=1e-4, f0=1.0):
    """Central difference over a ladder of steps, coarse to fine.

    Returns the coarsest estimate that agrees with the next finer one,
    else the finest.  Agreement allows a relative gap of ``agree`` plus the
    finer step's roundoff level, about 16 eps |f0| / h.  A coarse step
    straddling a kink (relu, abs, hard min) disagrees with the finer ones
    and is skipped, while smooth entries keep the coarse step's lower
    roundoff.  The choice looks only at the numeric estimates.
    """
    estimates = [central_difference(f, flat, i, h) for h in steps]
    scale = 16.0 * np.finfo(np.float64).eps * max(abs(f0), 1.0)
    for (coarse, fine), h in zip(zip(estimates, estimates[1:]), steps[1:]):
        if abs(coarse - fine) <= agree * max(abs(coarse), abs(fine)) + scale / h:
            return coarse
    return estimates[-1]


def check_values(f, values, step=1e-5, tol=1e-5, max_entries=None, rng=None, floor=1e-8,
                 analytic_hook=None):
    """Compare backprop gradients of ``f()`` against central differences.

    ``values`` maps a name to an :class:`NdValue` that ``f`` reads.  With
    ``max_entries`` only that many randomly chosen entries per value are
    perturbed.  ``step`` is a float or a coarse-to-fine sequence (see
    :func:`numeric_derivative`).  ``analytic_hook(name, grad)`` may rewrite
    a backprop gradient before comparison (used to confirm the check can fail).
    """
    steps = [step] if np.isscalar(step) else list(step)
    rng = np.random.default_rng(0) if rng is None else rng
    for v in values.values():
        v.grad = None
    loss = f()
    f0 = _scalar(lambda: loss)
    backward(loss)
    analytic = {k: (np.zeros(v.shape) if v.grad is None else v.grad.copy()) for k, v in values.items()}
    if analytic_hook is not None:
        analytic = {k: analytic_hook(k, g) for k, g in analytic.items()}

    report = GradCheckReport(0.0, tol)
    for name, v in values.items():
        flat = v.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        worst = 0.0
        worst_i = None
        for i in idx:
            if len(steps) == 1:
                numeric = central_difference(f, flat, i, steps[0])
            else:
                numeric = numeric_derivative(f, flat, i, steps, agree=tol, f0=f0)
            err = float(relative_error(analytic[name].reshape(-1)[i], numeric, floor))
            if err > worst or worst_i is None:
                worst, worst_i = err, i
        report.per_path[name] = worst
        if worst_i is not None and worst >= report.max_rel_error:
            report.max_rel_error = worst
            report.worst_path = name
            report.worst_index = np.unravel_index(worst_i, v.shape)
    return report


def grad_check(f, x, step=1e-5, tol=1e-5, **kw):
    """Check a scalar map ``f(x)`` at ``x`` (NdValue or array)."""
    if not isinstance(x, NdValue):
        x = NdValue(np.array(x, dtype=np.float64), requires_grad=True)
    x.requires_grad = True
    return check_values(lambda: f(x), {"x": x}, step=step, tol=tol, **kw)
