import dataclasses

import numpy as np
import pytest

from pisac import (BeamformingSet, CMatrix, max_sensing_sinr,
                   min_pairwise_distance, optimal_combiner, receive_positions,
                   sample_scenario, sensing_channel, sensing_covariance,
                   sensing_power, sensing_sinr, target_steering, training_loss,
                   user_channel, user_rate, waveguide_matrix)
from conftest import paper_config, random_beams, random_instance


def build_physics(scen, pa, cfg):
    f = waveguide_matrix(pa, cfg)
    f_t = target_steering(pa.positions(cfg), scen.target, cfg.wavelength)
    f_r = target_steering(receive_positions(cfg), scen.target, cfg.wavelength)
    g = sensing_channel(f_t, f_r)
    return f, f_t, f_r, g


def test_rate_zero_precoders(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    beams = BeamformingSet(w=[CMatrix.zeros(cfg.n_t, cfg.n_k)
                              for _ in range(cfg.n_users)], v=beams.v)
    f = waveguide_matrix(pa, cfg)
    h = user_channel(pa, ma, scen, cfg, 0)
    assert user_rate(0, h, f, beams, cfg.sigma_c2) == pytest.approx(0.0,
                                                                    abs=1e-9)


def test_rate_scalar_reduction(rng):
    # single user, single MA, v = 0: R = log2(1 + |h F w|^2 / sigma^2)
    cfg = paper_config(n_users=1, n_k=1)
    scen, pa, ma, beams = random_instance(rng, cfg)
    beams = BeamformingSet(w=beams.w, v=CMatrix.zeros(cfg.n_t, 1))
    f = waveguide_matrix(pa, cfg)
    h = user_channel(pa, ma, scen, cfg, 0)
    z = h.to_complex() @ f.to_complex() @ beams.w[0].to_complex()
    expected = np.log2(1.0 + abs(z[0, 0]) ** 2 / cfg.sigma_c2)
    assert user_rate(0, h, f, beams, cfg.sigma_c2) == pytest.approx(
        expected, rel=1e-9)


def test_rate_dual_path(rng):
    cfg = paper_config()
    for _ in range(100):
        scen, pa, ma, beams = random_instance(rng, cfg)
        f = waveguide_matrix(pa, cfg)
        k = int(rng.integers(cfg.n_users))
        h = user_channel(pa, ma, scen, cfg, k)
        a = user_rate(k, h, f, beams, cfg.sigma_c2, method="complex")
        b = user_rate(k, h, f, beams, cfg.sigma_c2, method="widened")
        assert b == pytest.approx(a, rel=1e-9)


def test_rate_noise_monotonicity(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    f = waveguide_matrix(pa, cfg)
    h = user_channel(pa, ma, scen, cfg, 0)
    rates = [user_rate(0, h, f, beams, s2)
             for s2 in (1e-13, 1e-12, 1e-11, 1e-10)]
    assert all(a >= b - 1e-12 for a, b in zip(rates, rates[1:]))


def test_sensing_covariance_zero_precoders(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    f, f_t, f_r, g = build_physics(scen, pa, cfg)
    beams = BeamformingSet(w=[CMatrix.zeros(cfg.n_t, cfg.n_k)
                              for _ in range(cfg.n_users)], v=beams.v)
    b = sensing_covariance(g, f, beams, cfg.sigma_z2)
    assert np.allclose(b.to_complex(), cfg.sigma_z2 * np.eye(cfg.n_r))


def test_sensing_covariance_rank_one(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    f, f_t, f_r, g = build_physics(scen, pa, cfg)
    b = sensing_covariance(g, f, beams, cfg.sigma_z2)
    core = b.to_complex() - cfg.sigma_z2 * np.eye(cfg.n_r)
    sv = np.linalg.svd(core, compute_uv=False)
    assert sv[1] <= 1e-12 * sv[0]


def test_sensing_covariance_dual_path(rng):
    cfg = paper_config()
    for _ in range(20):
        scen, pa, ma, beams = random_instance(rng, cfg)
        f, f_t, f_r, g = build_physics(scen, pa, cfg)
        bc = sensing_covariance(g, f, beams, cfg.sigma_z2, method="complex")
        bw = sensing_covariance(g, f, beams, cfg.sigma_z2, method="widened")
        assert (bc - bw).fro_norm() <= 1e-10 * bc.fro_norm()


def test_combiner_matched_filter(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    _, _, f_r, _ = build_physics(scen, pa, cfg)
    b = CMatrix.from_complex(cfg.sigma_z2 * np.eye(cfg.n_r))
    d = optimal_combiner(b, f_r)
    frz = f_r.to_complex()[:, 0]
    assert np.allclose(d.to_complex()[:, 0], frz / np.linalg.norm(frz))


def test_combiner_phase_invariance(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    f, f_t, f_r, g = build_physics(scen, pa, cfg)
    b = sensing_covariance(g, f, beams, cfg.sigma_z2)
    d = optimal_combiner(b, f_r)
    base = sensing_sinr(d, g, f, beams.v, b)
    for theta in (0.3, 1.1, 2.9):
        rot = CMatrix.from_complex(d.to_complex() * np.exp(1j * theta))
        assert sensing_sinr(rot, g, f, beams.v, b) == pytest.approx(
            base, rel=1e-12)


def test_combiner_scale_invariance(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    f, f_t, f_r, g = build_physics(scen, pa, cfg)
    b = sensing_covariance(g, f, beams, cfg.sigma_z2)
    d1 = optimal_combiner(b, f_r).to_complex()[:, 0]
    d2 = optimal_combiner(b.scale(3.7), f_r).to_complex()[:, 0]
    # equal up to a global phase
    inner = abs(np.vdot(d1, d2))
    assert inner == pytest.approx(1.0, rel=1e-10)


def test_sinr_numerator_kill(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    f, f_t, f_r, g = build_physics(scen, pa, cfg)
    # build v with a v = 0 for the row vector a = f_t^H F, so the
    # numerator f_t^H F v vanishes exactly
    a = (f_t.to_complex().conj().T @ f.to_complex())[0]
    v = rng.standard_normal(cfg.n_t) + 1j * rng.standard_normal(cfg.n_t)
    v = v - (a @ v) / (a @ a.conj()) * a.conj()
    v = CMatrix.from_complex((v / np.linalg.norm(v)).reshape(-1, 1))
    b = sensing_covariance(g, f, beams, cfg.sigma_z2)
    d = optimal_combiner(b, f_r)
    assert sensing_power(d, g, f, v) <= 1e-20
    assert sensing_sinr(d, g, f, v, b) <= 1e-9


def test_sinr_v_phase_invariance(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    f, f_t, f_r, g = build_physics(scen, pa, cfg)
    b = sensing_covariance(g, f, beams, cfg.sigma_z2)
    d = optimal_combiner(b, f_r)
    base_g = sensing_sinr(d, g, f, beams.v, b)
    base_p = sensing_power(d, g, f, beams.v)
    v_rot = CMatrix.from_complex(beams.v.to_complex() * np.exp(0.7j))
    assert sensing_sinr(d, g, f, v_rot, b) == pytest.approx(base_g, rel=1e-12)
    assert sensing_power(d, g, f, v_rot) == pytest.approx(base_p, rel=1e-12)


def test_sinr_dual_path(rng):
    cfg = paper_config()
    for _ in range(20):
        scen, pa, ma, beams = random_instance(rng, cfg)
        f, f_t, f_r, g = build_physics(scen, pa, cfg)
        b = sensing_covariance(g, f, beams, cfg.sigma_z2)
        d = optimal_combiner(b, f_r)
        gc = sensing_sinr(d, g, f, beams.v, b, method="complex")
        gw = sensing_sinr(d, g, f, beams.v, b, method="widened")
        assert gw == pytest.approx(gc, rel=1e-9)
        pc = sensing_power(d, g, f, beams.v, method="complex")
        pw = sensing_power(d, g, f, beams.v, method="widened")
        assert pw == pytest.approx(pc, rel=1e-9)


def test_envelope_identity(rng):
    cfg = paper_config()
    for _ in range(20):
        scen, pa, ma, beams = random_instance(rng, cfg)
        f, f_t, f_r, g = build_physics(scen, pa, cfg)
        b = sensing_covariance(g, f, beams, cfg.sigma_z2)
        d = optimal_combiner(b, f_r)
        direct = sensing_sinr(d, g, f, beams.v, b)
        closed = max_sensing_sinr(f_t, f_r, f, beams.v, b)
        assert closed == pytest.approx(direct, rel=1e-9)


def test_combiner_beats_random(rng):
    cfg = paper_config()
    scen, pa, ma, beams = random_instance(rng, cfg)
    f, f_t, f_r, g = build_physics(scen, pa, cfg)
    b = sensing_covariance(g, f, beams, cfg.sigma_z2)
    d = optimal_combiner(b, f_r)
    best = sensing_sinr(d, g, f, beams.v, b)
    for _ in range(1000):
        z = rng.standard_normal(cfg.n_r) + 1j * rng.standard_normal(cfg.n_r)
        dr = CMatrix.from_complex((z / np.linalg.norm(z)).reshape(-1, 1))
        assert sensing_sinr(dr, g, f, beams.v, b) <= best * (1 + 1e-12)


def test_min_pairwise_distance():
    assert min_pairwise_distance([[0.0, 0.0], [0.0, 0.03]]) == \
        pytest.approx(0.03)
    assert min_pairwise_distance([[0.0, 0.0]]) == float("inf")
    assert min_pairwise_distance(
        [[0.0, 0.0], [0.0, 0.05], [0.0, 0.12]]) == pytest.approx(0.05)


def test_training_loss_components():
    cfg = paper_config()
    rates = [2.0, 3.0]
    # all constraints satisfied
    total, br = training_loss(rates, [0.05, 0.04], 0.02, cfg)
    assert total == pytest.approx(-5.0)
    assert br["spacing_penalty"] == 0.0 and br["sinr_penalty"] == 0.0
    # spacing violation of 0.01 m at nu_d = 100 costs 1.0 per user
    total, br = training_loss(rates, [cfg.d_min - 0.01, 0.05], 0.02, cfg)
    assert br["spacing_penalty"] == pytest.approx(1.0)
    # hinge is exactly zero at the kink
    total, br = training_loss(rates, [0.05, 0.05], cfg.gamma0, cfg)
    assert br["sinr_penalty"] == 0.0
    # single-antenna users contribute no spacing penalty
    total, br = training_loss(rates, [float("inf")], 0.02, cfg)
    assert br["spacing_penalty"] == 0.0
    # decomposition sums to the total
    total, br = training_loss(rates, [0.01, 0.05], 0.001, cfg)
    assert total == pytest.approx(sum(br.values()))


def test_total_power(rng):
    cfg = paper_config()
    beams = random_beams(rng, cfg)
    assert beams.total_power() == pytest.approx(cfg.p_max, rel=1e-12)
