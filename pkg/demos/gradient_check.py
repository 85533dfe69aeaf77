"""Kick the tires on the autodiff engine.

Builds a few graphs by hand, compares reverse-mode gradients against
central finite differences, and finishes with the full training loss on
a tiny system so every primitive gets exercised in one graph.
"""

import numpy as np

from pisac import SystemConfig, make_dataset
from pisac import autodiff as ad
from pisac import lossgraph
from pisac.network import NetworkConfig, init_params, wrap_params

rng = np.random.default_rng(0)

# a handful of isolated primitives
print("primitive checks (worst relative error vs finite differences):")
cases = {
    "matmul": (lambda l: ad.sumn(ad.matmul(l[0], l[1])),
               [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))]),
    "conv1d": (lambda l: ad.sumn(ad.mul(ad.conv1d(l[0], l[1], l[2]),
                                        ad.conv1d(l[0], l[1], l[2]))),
               [rng.standard_normal((2, 2, 6)),
                rng.standard_normal((3, 2, 3)), rng.standard_normal(3)]),
    "sigmoid": (lambda l: ad.sumn(ad.sigmoid(l[0])),
                [rng.standard_normal(10)]),
    "solve": (lambda l: ad.sumn(ad.solve(l[0], l[1])),
              [np.eye(3) * 3 + 0.3 * rng.standard_normal((3, 3)),
               rng.standard_normal((3, 1))]),
}
for name, (builder, inputs) in cases.items():
    print(f"  {name:8s} {ad.check_gradient(builder, inputs):.3e}")

# the whole training loss, end to end
cfg = SystemConfig(n_t=3, n_r=2, n_k=2, n_users=1, n_scatterers=1)
net = NetworkConfig.from_system(cfg)
params = init_params(net, 0)
scens = make_dataset(cfg, 0, 8)
pre = lossgraph.precompute(scens, cfg)

nodes = wrap_params(params)
loss, aux = lossgraph.build_loss(scens, nodes, net, cfg, precomp=pre)
ad.backward(loss)
gmax = max(np.abs(n.grad).max() for n in nodes.values())
print(f"\nend-to-end loss {float(loss.value):.4f}, "
      f"gradient infinity-norm {gmax:.3e}")

# spot-check a few coordinates per tensor against finite differences
worst = 0.0
step = 1e-4  # larger step: the loss carries ~1e-12 evaluation noise
for name, node in nodes.items():
    arr = params.tensors[name]
    coords = list(np.ndindex(arr.shape))
    for ci in rng.choice(len(coords), size=min(2, len(coords)),
                         replace=False):
        idx = coords[ci]
        orig = arr[idx]
        arr[idx] = orig + step
        lp, _ = lossgraph.build_loss(scens, wrap_params(params), net, cfg,
                                     precomp=pre)
        arr[idx] = orig - step
        lm, _ = lossgraph.build_loss(scens, wrap_params(params), net, cfg,
                                     precomp=pre)
        arr[idx] = orig
        fd = (float(lp.value) - float(lm.value)) / (2 * step)
        worst = max(worst, abs(fd - float(node.grad[idx])) / gmax)
print(f"worst sampled end-to-end deviation (relative to "
      f"gradient scale): {worst:.3e}")
