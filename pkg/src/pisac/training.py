"""Dataset generation, penalty-loss Adam training, evaluation with the
closed-form combiner, and binary checkpointing.

Everything is deterministic given (system config, train config, seeds):
datasets derive per-index seeds from disjoint streams, shuffling uses a
dedicated generator, and the Adam step runs at a single synchronization
point per batch in a fixed parameter order.
"""

from __future__ import annotations

import io
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, asdict

import numpy as np

from . import lossgraph
from . import network as net_mod
from .cmatrix import CMatrix
from .metrics import (BeamformingSet, MetricsRecord, max_sensing_sinr,
                      min_pairwise_distance, optimal_combiner,
                      sensing_covariance, sensing_power, sensing_sinr,
                      user_rate)
from .network import (NetworkConfig, NetworkParams, init_params, wrap_params,
                      VARIANT_FIX_ANT, VARIANT_PROPOSED)
from .scenario import (MAPlacement, PAPlacement, Scenario, SystemConfig,
                       receive_positions, sample_scenario, sensing_channel,
                       target_steering, user_channel, waveguide_matrix)

CHECKPOINT_MAGIC = b"PISAC"
CHECKPOINT_VERSION = 1

_STREAMS = {"train": 0, "test": 1}


class NumericalAbortError(RuntimeError):
    """Training hit a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    """Training-loop hyperparameters and seeds."""

    train_size: int = 2000
    test_size: int = 500
    batch_size: int = 50
    epochs: int = 300
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    data_seed: int = 0
    init_seed: int = 0
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.batch_size > self.train_size:
            raise ValueError("batch_size must not exceed train_size")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: "OrderedDict[str, np.ndarray]"
    v: "OrderedDict[str, np.ndarray]"
    t: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "AdamState":
        return cls(
            OrderedDict((k, np.zeros_like(a)) for k, a in params.tensors.items()),
            OrderedDict((k, np.zeros_like(a)) for k, a in params.tensors.items()),
            0)


def adam_step(params: NetworkParams, grads: dict, state: AdamState,
              cfg: TrainConfig):
    """One bias-corrected Adam update, in place, in fixed tensor order."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for name, arr in params.tensors.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(arr)
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / corr1
        v_hat = state.v[name] / corr2
        arr -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def make_dataset(config: SystemConfig, seed: int, n: int,
                 stream: str = "train"):
    """n independent scenarios; train/test streams use disjoint seed
    derivations from the same base seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    child = np.random.SeedSequence(entropy=(seed, _STREAMS[stream]))
    per_index = child.generate_state(2 * n, dtype=np.uint64)
    return [sample_scenario(config, int(per_index[2 * i]))
            for i in range(n)]


def train(sys_cfg: SystemConfig, train_cfg: TrainConfig,
          variant: str = VARIANT_PROPOSED, progress=None):
    """Run the full training loop; returns (params, adam state, history).

    history is a list of per-epoch dicts: epoch, mean_loss,
    mean_sum_rate, spacing_penalty, sinr_penalty.
    """
    net_cfg = NetworkConfig.from_system(sys_cfg)
    params = init_params(net_cfg, train_cfg.init_seed)
    state = AdamState.zeros_like(params)
    data = make_dataset(sys_cfg, train_cfg.data_seed, train_cfg.train_size)
    cache = lossgraph.precompute(data, sys_cfg)
    shuffle_rng = np.random.default_rng(train_cfg.shuffle_seed)

    history = []
    n = len(data)
    bs = train_cfg.batch_size
    for epoch in range(1, train_cfg.epochs + 1):
        perm = shuffle_rng.permutation(n)
        tot_loss = tot_rate = tot_sp = tot_si = 0.0
        count = 0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            batch = [data[i] for i in idx]
            pre = {"x_in": cache["x_in"][idx], "fr": cache["fr"][idx]}
            nodes = wrap_params(params)
            loss, aux = lossgraph.build_loss(batch, nodes, net_cfg, sys_cfg,
                                             variant, precomp=pre)
            if not np.isfinite(loss.value):
                raise NumericalAbortError(
                    f"non-finite loss at epoch {epoch}")
            from .autodiff import backward
            backward(loss)
            grads = {name: (node.grad if node.grad is not None
                            else np.zeros_like(node.value))
                     for name, node in nodes.items()}
            adam_step(params, grads, state, train_cfg)
            b = len(batch)
            tot_loss += float(loss.value) * b
            tot_rate += float(aux["sum_rate"].mean()) * b
            tot_sp += float(aux["spacing_penalty"].mean()) * b
            tot_si += float(aux["sinr_penalty"].mean()) * b
            count += b
        row = {
            "epoch": epoch,
            "mean_loss": tot_loss / count,
            "mean_sum_rate": tot_rate / count,
            "spacing_penalty": tot_sp / count,
            "sinr_penalty": tot_si / count,
        }
        history.append(row)
        if progress is not None:
            progress(row)
    return params, state, history


def network_outputs(params: NetworkParams, scenarios, sys_cfg: SystemConfig,
                    variant: str):
    """Forward-only network pass; returns numpy arrays per output."""
    net_cfg = NetworkConfig.from_system(sys_cfg)
    _, aux = lossgraph.build_loss(scenarios, wrap_params(params), net_cfg,
                                  sys_cfg, variant)
    out = aux["outputs"]
    return ({k: out[k].value for k in out}, aux)


def evaluate_scenario(scenario: Scenario, y_t: np.ndarray,
                      u_local: np.ndarray, w_re: np.ndarray,
                      w_im: np.ndarray, v_re: np.ndarray, v_im: np.ndarray,
                      sys_cfg: SystemConfig) -> MetricsRecord:
    """Metrics for one scenario via the complex reference path and the
    closed-form combiner."""
    pa = PAPlacement(y_t)
    ma = MAPlacement(u_local)
    f = waveguide_matrix(pa, sys_cfg)
    beams = BeamformingSet(
        w=[CMatrix(w_re[k], w_im[k]) for k in range(sys_cfg.n_users)],
        v=CMatrix(v_re.reshape(-1, 1), v_im.reshape(-1, 1)))
    rates = []
    for k in range(sys_cfg.n_users):
        h_k = user_channel(pa, ma, scenario, sys_cfg, k)
        rates.append(user_rate(k, h_k, f, beams, sys_cfg.sigma_c2))
    f_t = target_steering(pa.positions(sys_cfg), scenario.target,
                          sys_cfg.wavelength)
    f_r = target_steering(receive_positions(sys_cfg), scenario.target,
                          sys_cfg.wavelength)
    g = sensing_channel(f_t, f_r)
    b = sensing_covariance(g, f, beams, sys_cfg.sigma_z2)
    d = optimal_combiner(b, f_r)
    gamma = sensing_sinr(d, g, f, beams.v, b)
    p_s = sensing_power(d, g, f, beams.v)
    d_k = [min_pairwise_distance(u_local[k]) for k in range(sys_cfg.n_users)]
    return MetricsRecord(
        rates=rates,
        sum_rate=float(np.sum(rates)),
        gamma_s=gamma,
        p_s=p_s,
        d_k=d_k,
        power_ok=beams.total_power() <= sys_cfg.p_max + 1e-9,
        sinr_ok=gamma >= sys_cfg.gamma0,
        spacing_ok=all(dk >= sys_cfg.d_min for dk in d_k),
    )


def evaluate(params: NetworkParams, scenarios, sys_cfg: SystemConfig,
             variant: str, chunk: int = 100):
    """Evaluate a trained network on a scenario list.

    Returns (aggregates dict, list of MetricsRecord).
    """
    records = []
    for start in range(0, len(scenarios), chunk):
        part = scenarios[start:start + chunk]
        out, _ = network_outputs(params, part, sys_cfg, variant)
        for i, scen in enumerate(part):
            records.append(evaluate_scenario(
                scen, out["y_t"][i], out["u_local"][i], out["w_re"][i],
                out["w_im"][i], out["v_re"][i], out["v_im"][i], sys_cfg))
    n = len(records)
    agg = {
        "mean_sum_rate": float(np.mean([r.sum_rate for r in records])),
        "mean_ps": float(np.mean([r.p_s for r in records])),
        "sinr_satisfaction": float(np.mean([r.sinr_ok for r in records])),
        "spacing_satisfaction": float(np.mean([r.spacing_ok
                                               for r in records])),
        "n": n,
    }
    return agg, records


# -- checkpoint format --------------------------------------------------------
# magic "PISAC" | version u16 LE | u32 json config length | json |
# u32 tensor count | per tensor: u16 name length, name utf-8, rank u8,
# extents u32..., payload f64 LE row-major | epoch u32 | adam step u32.
# Tensor sequence: network parameters, Adam m moments, Adam v moments.


def _write_tensor(buf: io.BytesIO, name: str, arr: np.ndarray):
    enc = name.encode("utf-8")
    buf.write(struct.pack("<H", len(enc)))
    buf.write(enc)
    buf.write(struct.pack("<B", arr.ndim))
    for extent in arr.shape:
        buf.write(struct.pack("<I", extent))
    buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_tensor(buf: io.BytesIO):
    (name_len,) = struct.unpack("<H", buf.read(2))
    name = buf.read(name_len).decode("utf-8")
    (rank,) = struct.unpack("<B", buf.read(1))
    shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(shape)
    return name, arr.astype(np.float64)


def _config_json(sys_cfg: SystemConfig, train_cfg: TrainConfig,
                 variant: str, epoch: int) -> dict:
    sc = asdict(sys_cfg)
    sc["user_boxes"] = [[list(b.lo), list(b.hi)] for b in sys_cfg.user_boxes]
    sc["target_box"] = [list(sys_cfg.target_box.lo),
                        list(sys_cfg.target_box.hi)]
    sc["scatterer_box"] = [list(sys_cfg.scatterer_box.lo),
                           list(sys_cfg.scatterer_box.hi)]
    sc["rx_midpoint"] = list(sys_cfg.rx_midpoint)
    return {"system": sc, "train": asdict(train_cfg), "variant": variant,
            "epoch": epoch}


def save_checkpoint(path, sys_cfg: SystemConfig, train_cfg: TrainConfig,
                    params: NetworkParams, state: AdamState, epoch: int,
                    variant: str):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<H", CHECKPOINT_VERSION))
    cfg = json.dumps(_config_json(sys_cfg, train_cfg, variant, epoch),
                     sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    tensors = ([(n, a) for n, a in params.tensors.items()]
               + [("adam_m." + n, a) for n, a in state.m.items()]
               + [("adam_v." + n, a) for n, a in state.v.items()])
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        _write_tensor(buf, name, arr)
    buf.write(struct.pack("<II", epoch, state.t))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Returns (sys_cfg, train_cfg, params, adam state, epoch, variant)."""
    with open(path, "rb") as fh:
        buf = io.BytesIO(fh.read())
    if buf.read(5) != CHECKPOINT_MAGIC:
        raise ValueError("not a PISAC checkpoint")
    (version,) = struct.unpack("<H", buf.read(2))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", buf.read(4))
    cfg = json.loads(buf.read(cfg_len).decode("utf-8"))
    sys_cfg = SystemConfig(**cfg["system"])
    train_cfg = TrainConfig(**cfg["train"])
    (n_tensors,) = struct.unpack("<I", buf.read(4))
    params = OrderedDict()
    m = OrderedDict()
    v = OrderedDict()
    for _ in range(n_tensors):
        name, arr = _read_tensor(buf)
        if name.startswith("adam_m."):
            m[name[len("adam_m."):]] = arr
        elif name.startswith("adam_v."):
            v[name[len("adam_v."):]] = arr
        else:
            params[name] = arr
    epoch, adam_t = struct.unpack("<II", buf.read(8))
    return (sys_cfg, train_cfg, NetworkParams(params),
            AdamState(m, v, t=adam_t), epoch, cfg["variant"])
