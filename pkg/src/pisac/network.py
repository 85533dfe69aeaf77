"""Three-block policy network mapping a normalized geometry descriptor to
PA positions, MA positions, precoders and the sensing beamformer.

Block 1: seven conv1d(kernel 3, same padding) + ELU + maxpool(2, ceil)
layers; the first layer has 2C kernels, the rest C, with
C = n_t + 2K n_k + 2K n_t n_k + 2K n_t.
Block 2: two parallel conv layers (n_t and 2K n_k kernels) with sigmoid
and global average pooling; outputs scaled by D_t / D_k so the position
box constraints hold structurally.
Block 3: two dense heads on [GAP(block1), block2 outputs]; the precoder
head is renormalized to sqrt(P_max) (power budget tight by construction)
and the beamformer head to unit norm.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .scenario import (Scenario, SystemConfig, uniform_ma_grid,
                       uniform_pa_grid)

VARIANT_PROPOSED = "proposed"
VARIANT_FIX_ANT = "fix-ant"
DEPTH = 7
KERNEL = 3


@dataclass
class NetworkConfig:
    """Architecture sizes derived from the system dimensions."""

    n_t: int
    n_users: int
    n_k: int
    n_scatterers: int

    @classmethod
    def from_system(cls, cfg: SystemConfig) -> "NetworkConfig":
        return cls(cfg.n_t, cfg.n_users, cfg.n_k, cfg.n_scatterers)

    @property
    def channels(self) -> int:
        k, n_t, n_k = self.n_users, self.n_t, self.n_k
        return n_t + 2 * k * n_k + 2 * k * n_t * n_k + 2 * k * n_t

    @property
    def input_len(self) -> int:
        return self.n_t + 3 * self.n_users + 3 * self.n_scatterers + 3

    @property
    def pos_u_width(self) -> int:
        return 2 * self.n_users * self.n_k

    @property
    def precoder_width(self) -> int:
        return 2 * self.n_users * self.n_t * self.n_k

    @property
    def dense_in(self) -> int:
        return self.channels + self.n_t + self.pos_u_width


@dataclass
class NetworkParams:
    """All kernels, biases and dense weights, in a fixed order."""

    tensors: "OrderedDict[str, np.ndarray]"

    def names(self):
        return list(self.tensors.keys())

    def copy(self) -> "NetworkParams":
        return NetworkParams(OrderedDict(
            (k, v.copy()) for k, v in self.tensors.items()))


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(config: NetworkConfig, seed: int) -> NetworkParams:
    """Glorot-uniform kernels/weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    c = config.channels
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    in_ch = 1
    for layer in range(1, DEPTH + 1):
        out_ch = 2 * c if layer == 1 else c
        tensors[f"conv{layer}_w"] = _glorot(
            rng, (out_ch, in_ch, KERNEL), in_ch * KERNEL, out_ch * KERNEL)
        tensors[f"conv{layer}_b"] = np.zeros(out_ch)
        in_ch = out_ch
    tensors["pos_t_w"] = _glorot(
        rng, (config.n_t, c, KERNEL), c * KERNEL, config.n_t * KERNEL)
    tensors["pos_t_b"] = np.zeros(config.n_t)
    tensors["pos_u_w"] = _glorot(
        rng, (config.pos_u_width, c, KERNEL), c * KERNEL,
        config.pos_u_width * KERNEL)
    tensors["pos_u_b"] = np.zeros(config.pos_u_width)
    tensors["dense_w_w"] = _glorot(
        rng, (config.precoder_width, config.dense_in),
        config.dense_in, config.precoder_width)
    tensors["dense_w_b"] = np.zeros(config.precoder_width)
    tensors["dense_v_w"] = _glorot(
        rng, (2 * config.n_t, config.dense_in),
        config.dense_in, 2 * config.n_t)
    tensors["dense_v_b"] = np.zeros(2 * config.n_t)
    return NetworkParams(tensors)


def _normalize_element(values, lo, hi):
    values = np.asarray(values, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(values < lo - 1e-12) or np.any(values > hi + 1e-12):
        raise ValueError("input element outside its feasible interval")
    span = hi - lo
    out = np.where(span > 0, (values - lo) / np.where(span > 0, span, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


def assemble_and_preprocess(scenario: Scenario, config: SystemConfig,
                            pa_init: np.ndarray | None = None) -> np.ndarray:
    """Min-max-normalized descriptor [y_t, b_1..b_K, xi_1..xi_L, q_p].

    The y_t slot carries the fixed reference grid (the network also
    predicts the optimized placement as an output).
    """
    if pa_init is None:
        pa_init = uniform_pa_grid(config).y_t
    parts = [_normalize_element(pa_init, 0.0, config.d_t)]
    for k, box in enumerate(config.user_boxes):
        parts.append(_normalize_element(
            scenario.user_origins[k], box.lo, box.hi))
    for i in range(config.n_scatterers):
        parts.append(_normalize_element(
            scenario.scatterers[i], config.scatterer_box.lo,
            config.scatterer_box.hi))
    parts.append(_normalize_element(
        scenario.target, config.target_box.lo, config.target_box.hi))
    return np.concatenate(parts)


def assemble_batch(scenarios, config: SystemConfig) -> np.ndarray:
    """(batch, 1, input_len) stack of normalized descriptors."""
    rows = [assemble_and_preprocess(s, config) for s in scenarios]
    return np.stack(rows)[:, None, :]


def fixed_positions(config: SystemConfig, batch: int):
    """Fix-Ant constants: uniform PA grid and ULA MA layout."""
    y_t = np.tile(uniform_pa_grid(config).y_t, (batch, 1))
    u = np.tile(uniform_ma_grid(config).local, (batch, 1, 1, 1))
    return y_t, u


def forward(x: ad.Node, params: dict, net: NetworkConfig,
            sys_cfg: SystemConfig, variant: str = VARIANT_PROPOSED):
    """Run the network on a (batch, 1, input_len) descriptor.

    params maps tensor names to autodiff Nodes (or plain arrays wrapped
    by the caller).  Returns a dict of Nodes:
      y_t (batch, n_t), u_local (batch, K, n_k, 2),
      w_re/w_im (batch, K, n_t, n_k), v_re/v_im (batch, n_t).
    """
    batch = x.shape[0]
    h = x
    for layer in range(1, DEPTH + 1):
        h = ad.maxpool1d(ad.elu(ad.conv1d(
            h, params[f"conv{layer}_w"], params[f"conv{layer}_b"])))
    g1 = ad.global_avg_pool(h)  # (batch, C)

    if variant == VARIANT_PROPOSED:
        y_t = ad.mul(ad.global_avg_pool(ad.sigmoid(ad.conv1d(
            h, params["pos_t_w"], params["pos_t_b"]))),
            ad.constant(sys_cfg.d_t))
        u_flat = ad.mul(ad.global_avg_pool(ad.sigmoid(ad.conv1d(
            h, params["pos_u_w"], params["pos_u_b"]))),
            ad.constant(sys_cfg.d_k))
    elif variant == VARIANT_FIX_ANT:
        y_fix, u_fix = fixed_positions(sys_cfg, batch)
        y_t = ad.constant(y_fix)
        # flatten matching the (K, n_k, 2) reshape below
        u_flat = ad.constant(u_fix.reshape(batch, -1))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    u_local = ad.reshape(u_flat, (batch, net.n_users, net.n_k, 2))

    z = ad.concat([g1, y_t, u_flat], axis=1)

    w_flat = ad.add(ad.matmul(z, ad.transpose(params["dense_w_w"])),
                    params["dense_w_b"])
    w_norm = ad.norm(w_flat, axis=-1, keepdims=True)
    w_flat = ad.mul(ad.mul(w_flat, ad.reciprocal(w_norm)),
                    ad.constant(np.sqrt(sys_cfg.p_max)))
    w = ad.reshape(w_flat, (batch, 2, net.n_users, net.n_t, net.n_k))

    v_flat = ad.add(ad.matmul(z, ad.transpose(params["dense_v_w"])),
                    params["dense_v_b"])
    v_norm = ad.norm(v_flat, axis=-1, keepdims=True)
    v_flat = ad.mul(v_flat, ad.reciprocal(v_norm))
    v = ad.reshape(v_flat, (batch, 2, net.n_t))

    return {
        "y_t": y_t,
        "u_local": u_local,
        "w_re": w[:, 0],
        "w_im": w[:, 1],
        "v_re": v[:, 0],
        "v_im": v[:, 1],
    }


def wrap_params(params: NetworkParams) -> dict:
    """Wrap parameter arrays in fresh leaf Nodes for one graph build."""
    return {name: ad.Node(arr) for name, arr in params.tensors.items()}
