import numpy as np
import pytest

from pisac import (BeamformingSet, CMatrix, MAPlacement, PAPlacement,
                   SystemConfig, sample_scenario)


def paper_config(**overrides):
    """Full-size system used by the oracle-style tests."""
    return SystemConfig(**overrides)


def tiny_config(**overrides):
    """The small configuration used for gradient and smoke tests."""
    kw = dict(n_t=3, n_r=2, n_k=2, n_users=1, n_scatterers=1)
    kw.update(overrides)
    return SystemConfig(**kw)


def random_placements(rng, cfg):
    pa = PAPlacement(rng.uniform(0.0, cfg.d_t, size=cfg.n_t))
    ma = MAPlacement(rng.uniform(0.0, cfg.d_k,
                                 size=(cfg.n_users, cfg.n_k, 2)))
    return pa, ma


def random_beams(rng, cfg, power=None):
    """Random beamforming set with the power budget tight."""
    if power is None:
        power = cfg.p_max
    w = [rng.standard_normal((cfg.n_t, cfg.n_k))
         + 1j * rng.standard_normal((cfg.n_t, cfg.n_k))
         for _ in range(cfg.n_users)]
    tot = np.sqrt(sum(np.abs(wk) ** 2 for wk in w).sum())
    w = [CMatrix.from_complex(wk * np.sqrt(power) / tot) for wk in w]
    v = rng.standard_normal(cfg.n_t) + 1j * rng.standard_normal(cfg.n_t)
    v = CMatrix.from_complex((v / np.linalg.norm(v)).reshape(-1, 1))
    return BeamformingSet(w=w, v=v)


def random_instance(rng, cfg):
    """One (scenario, placements, beams) tuple for the dual-path oracles."""
    scen = sample_scenario(cfg, int(rng.integers(0, 2 ** 31)))
    pa, ma = random_placements(rng, cfg)
    beams = random_beams(rng, cfg)
    return scen, pa, ma, beams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
