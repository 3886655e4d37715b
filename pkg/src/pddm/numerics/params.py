"""Named parameter storage with seeded Glorot-uniform initialisation."""

import numpy as np

from ..errors import ContractError
from .value import NdValue


def glorot_bound(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


class ParamStore:
    """Ordered map from a dotted parameter path to a trainable :class:`NdValue`."""

    def __init__(self, seed=0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params = {}

    def create(self, path, shape, init="glorot", fan=None):
        """Register a new parameter.

        ``init`` is ``"glorot"``, ``"zeros"``, ``"ones"`` or an array.  For
        Glorot init ``fan`` defaults to the last two extents of ``shape``.
        """
        if path in self._params:
            raise ContractError(f"duplicate parameter path {path!r}")
        shape = tuple(int(s) for s in shape)
        if isinstance(init, str):
            if init == "zeros":
                data = np.zeros(shape)
            elif init == "ones":
                data = np.ones(shape)
            elif init == "glorot":
                if fan is None:
                    fan = (shape[-2], shape[-1]) if len(shape) >= 2 else (shape[0], shape[0])
                a = glorot_bound(*fan)
                data = self.rng.uniform(-a, a, size=shape)
            else:
                raise ContractError(f"unknown init {init!r}")
        else:
            data = np.array(init, dtype=np.float64).reshape(shape)
        value = NdValue(data, requires_grad=True, name=path)
        self._params[path] = value
        return value

    def __getitem__(self, path):
        return self._params[path]

    def __contains__(self, path):
        return path in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def num_parameters(self, prefix=""):
        return int(sum(v.size for k, v in self._params.items() if k.startswith(prefix)))

    def zero_grad(self):
        for v in self._params.values():
            v.grad = None

    def state(self):
        """Copy of all parameter arrays keyed by path."""
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state(self, state, strict=True):
        if strict and set(state) != set(self._params):
            missing = sorted(set(self._params) - set(state))
            extra = sorted(set(state) - set(self._params))
            raise ContractError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, arr in state.items():
            if k not in self._params:
                continue
            target = self._params[k]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != target.shape:
                raise ContractError(f"shape mismatch for {k}: {arr.shape} vs {target.shape}")
            target.data = arr.copy()
