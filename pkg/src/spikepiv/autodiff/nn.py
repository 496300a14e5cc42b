"""Parameter containers and the handful of layers the flow network is built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .tensor import Parameter, Tensor


class Module:
    """Attribute-walking parameter container.

    Parameters and sub-modules are discovered from instance attributes (and lists
    of modules) in insertion order, so naming is deterministic.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path + "/")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}/{i}/")
                    elif isinstance(item, Parameter):
                        yield f"{path}/{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        seen = set()
        for name, p in self.named_parameters():
            if name in seen:
                raise ValueError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for n, p in own.items():
            arr = np.asarray(state[n], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{n}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _kaiming(rng: np.random.Generator, shape, fan_in: int, gain: float = 1.0) -> np.ndarray:
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator,
                 stride: int = 1, padding: int | None = None, bias: bool = True, zero: bool = False):
        shape = (cout, cin, k, k)
        self.weight = Parameter(np.zeros(shape) if zero else _kaiming(rng, shape, cin * k * k))
        self.bias = Parameter(np.zeros(cout)) if bias else None
        self.stride = stride
        self.padding = k // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Conv3d(Module):
    def __init__(self, cin: int, cout: int, k: tuple[int, int, int], rng: np.random.Generator,
                 stride=1, padding=None, bias: bool = True):
        shape = (cout, cin) + tuple(k)
        self.weight = Parameter(_kaiming(rng, shape, cin * int(np.prod(k))))
        self.bias = Parameter(np.zeros(cout)) if bias else None
        self.stride = stride
        self.padding = tuple(kk // 2 for kk in k) if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, self.stride, self.padding)


class GRUParams(Module):
    """Gate kernels for :func:`ops.gru_cell`."""

    def __init__(self, hidden: int, inp: int, rng: np.random.Generator, k: int = 3):
        shape = (hidden, hidden + inp, k, k)
        fan = (hidden + inp) * k * k
        self.wz = Parameter(_kaiming(rng, shape, fan))
        self.bz = Parameter(np.zeros(hidden))
        self.wr = Parameter(_kaiming(rng, shape, fan))
        self.br = Parameter(np.zeros(hidden))
        self.wq = Parameter(_kaiming(rng, shape, fan))
        self.bq = Parameter(np.zeros(hidden))

    def forward(self, h: Tensor, x: Tensor) -> Tensor:
        return ops.gru_cell(h, x, self)
