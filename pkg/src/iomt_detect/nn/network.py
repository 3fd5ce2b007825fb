from __future__ import annotations

import itertools

import numpy as np

from .layers import LAYER_TYPES, Layer

_net_ids = itertools.count()


class StaleCacheError(RuntimeError):
    pass


class ForwardCache:
    __slots__ = ("net_id", "version", "layer_caches")

    def __init__(self, net_id, version, layer_caches):
        self.net_id = net_id
        self.version = version
        self.layer_caches = layer_caches


class Sequential:
    """A plain stack of layers.

    Parameters are addressed as ``"<layer index>.<name>"``. ``version``
    increments on every in-place update so a cache from before an update
    is rejected by :meth:`backward`.
    """

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)
        self._id = next(_net_ids)
        self.version = 0

    def params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def n_params(self) -> int:
        return sum(v.size for v in self.params().values())

    def touch(self):
        self.version += 1

    def forward(self, x):
        caches = []
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out, c = layer.forward(out)
            caches.append(c)
        return out, ForwardCache(self._id, self.version, caches)

    def predict(self, x):
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, dout):
        if not isinstance(cache, ForwardCache) or cache.net_id != self._id:
            raise StaleCacheError("cache was produced by a different network")
        if cache.version != self.version:
            raise StaleCacheError("parameters changed since this cache was produced")
        grads = {}
        d = dout
        for i in reversed(range(len(self.layers))):
            d, g = self.layers[i].backward(d, cache.layer_caches[i])
            for k, v in g.items():
                grads[f"{i}.{k}"] = v
        return grads

    def to_dict(self) -> dict:
        return {
            "layers": [{"kind": layer.kind, "config": layer.config()} for layer in self.layers],
            "parameters": {k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
                           for k, v in self.params().items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Sequential":
        layers = []
        for spec in doc["layers"]:
            layers.append(LAYER_TYPES[spec["kind"]](**spec["config"]))
        net = cls(layers)
        for key, arr in doc["parameters"].items():
            i, name = key.split(".", 1)
            net.layers[int(i)].params[name] = np.array(arr["data"], dtype=np.float64).reshape(arr["shape"])
        return net
