"""Differentiable pipeline: geometry descriptor -> network -> channels
-> rates and sensing SINR -> penalty loss, all over real tensors.

Complex quantities are carried as (re, im) node pairs; products follow
the widened rules.  The sensing SINR enters through its closed-form
maximum |f_t^H F v|^2 * (f_r^H B^-1 f_r), which equals the SINR at the
optimal combiner, so the combiner itself never appears in the graph.
The rank-one structure of the sensing channel (G = f_r f_t^H) is used
exactly: B = (sum_k ||f_t^H F W_k||^2) f_r f_r^H + sigma_z^2 I.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import network as net_mod
from .scenario import SystemConfig, receive_positions, target_steering

FOUR_PI = 4.0 * np.pi


def _cmm(ar, ai, br, bi):
    """Complex matrix product on (re, im) node pairs."""
    return (ad.sub(ad.matmul(ar, br), ad.matmul(ai, bi)),
            ad.add(ad.matmul(ar, bi), ad.matmul(ai, br)))


def _widen_pair(re, im):
    """Block [[re, -im], [im, re]] over the trailing two axes."""
    top = ad.concat([re, -im], axis=-1)
    bot = ad.concat([im, re], axis=-1)
    return ad.concat([top, bot], axis=-2)


def _steering_pair(dist, wavelength):
    """(re, im) of (lambda/4pi) exp(-j 2 pi d / lambda) / d for a node d."""
    amp = (wavelength / FOUR_PI) * ad.reciprocal(dist)
    phase = dist * (2.0 * np.pi / wavelength)
    return ad.mul(amp, ad.cos(phase)), -ad.mul(amp, ad.sin(phase))


def precompute(scenarios, sys_cfg: SystemConfig) -> dict:
    """Scenario-only constants reused across epochs: normalized network
    descriptors and receive steering vectors."""
    rx = receive_positions(sys_cfg)
    fr = np.stack([target_steering(rx, s.target,
                                   sys_cfg.wavelength).to_complex()[:, 0]
                   for s in scenarios])
    return {"x_in": net_mod.assemble_batch(scenarios, sys_cfg), "fr": fr}


def build_loss(scenarios, param_nodes: dict, net_cfg, sys_cfg: SystemConfig,
               variant: str = net_mod.VARIANT_PROPOSED, precomp=None):
    """Build the batched training graph and return (loss_node, aux).

    aux carries per-sample diagnostics (numpy values) plus the output
    nodes for callers that only need the forward pass.
    """
    batch = len(scenarios)
    lam = sys_cfg.wavelength
    n_t, n_r = sys_cfg.n_t, sys_cfg.n_r
    n_users, n_k, n_sc = sys_cfg.n_users, sys_cfg.n_k, sys_cfg.n_scatterers

    origins = np.stack([s.user_origins for s in scenarios])   # (B, K, 3)
    scat = np.stack([s.scatterers for s in scenarios])        # (B, L, 3)
    targets = np.stack([s.target for s in scenarios])         # (B, 3)

    if precomp is None:
        precomp = precompute(scenarios, sys_cfg)
    x_in = ad.constant(precomp["x_in"])
    out = net_mod.forward(x_in, param_nodes, net_cfg, sys_cfg, variant)
    y_t, u_local = out["y_t"], out["u_local"]
    w_re, w_im = out["w_re"], out["w_im"]
    v_re, v_im = out["v_re"], out["v_im"]

    # PA positions t_n = [grid_x, y_t, 0]
    grid_x = np.arange(n_t) * sys_cfg.d_t / (n_t - 1)
    t_x = ad.constant(np.tile(grid_x, (batch, 1))[:, :, None])
    t_y = ad.reshape(y_t, (batch, n_t, 1))
    t_z = ad.constant(np.zeros((batch, n_t, 1)))
    t_pos = ad.concat([t_x, t_y, t_z], axis=2)               # (B, n_t, 3)

    # Global MA positions u = local + user origin
    b_xy = ad.constant(origins[:, :, None, :2])               # (B, K, 1, 2)
    b_z = ad.constant(np.broadcast_to(
        origins[:, :, None, 2:3], (batch, n_users, n_k, 1)).copy())
    u_xy = ad.add(u_local, b_xy)                              # (B, K, n_k, 2)
    u_pos = ad.concat([u_xy, b_z], axis=3)                    # (B, K, n_k, 3)

    # Line-of-sight component
    t5 = ad.reshape(t_pos, (batch, 1, 1, n_t, 3))
    u5 = ad.reshape(u_pos, (batch, n_users, n_k, 1, 3))
    d_tu = ad.norm(ad.sub(u5, t5), axis=-1)                   # (B, K, n_k, n_t)
    hl_re, hl_im = _steering_pair(d_tu, lam)

    # Scattered component
    kap = sys_cfg.rician_k
    c_los = np.sqrt(kap / (kap + 1.0))
    c_nlos = np.sqrt(1.0 / (kap + 1.0))
    if n_sc > 0:
        xi_t = ad.constant(scat[:, None, :, :])               # (B, 1, L, 3)
        d_txi = ad.norm(ad.sub(ad.reshape(t_pos, (batch, n_t, 1, 3)), xi_t),
                        axis=-1)                              # (B, n_t, L)
        d_txi5 = ad.reshape(d_txi, (batch, 1, 1, n_t, n_sc))
        xi_u = ad.constant(scat[:, None, None, :, :])         # (B,1,1,L,3)
        d_uxi = ad.norm(ad.sub(ad.reshape(u_pos, (batch, n_users, n_k, 1, 3)),
                               xi_u), axis=-1)                # (B, K, n_k, L)
        d_uxi5 = ad.reshape(d_uxi, (batch, n_users, n_k, 1, n_sc))
        delta = ad.sub(d_uxi5, d_txi5) * (2.0 * np.pi / lam)
        amp = (lam / FOUR_PI) * ad.mul(ad.reciprocal(d_txi5),
                                       ad.reciprocal(d_uxi5))
        hn_re = ad.sumn(ad.mul(amp, ad.cos(delta)), axis=-1)
        hn_im = -ad.sumn(ad.mul(amp, ad.sin(delta)), axis=-1)
        h_re = ad.add(c_los * hl_re, c_nlos * hn_re)
        h_im = ad.add(c_los * hl_im, c_nlos * hn_im)
    else:
        h_re, h_im = c_los * hl_re, c_los * hl_im

    # Waveguide phases and the column-scaled product A = H F
    phase = y_t * (2.0 * np.pi * sys_cfg.refractive_index / lam)
    f_re, f_im = ad.cos(phase), -ad.sin(phase)                # (B, n_t)
    f_re4 = ad.reshape(f_re, (batch, 1, 1, n_t))
    f_im4 = ad.reshape(f_im, (batch, 1, 1, n_t))
    a_re = ad.sub(ad.mul(h_re, f_re4), ad.mul(h_im, f_im4))
    a_im = ad.add(ad.mul(h_re, f_im4), ad.mul(h_im, f_re4))

    # Per-user covariances and rates
    wwh_re, wwh_im = _cmm(w_re, w_im,
                          ad.transpose(w_re), -ad.transpose(w_im))
    v_col_re = ad.reshape(v_re, (batch, n_t, 1))
    v_col_im = ad.reshape(v_im, (batch, n_t, 1))
    vvh_re, vvh_im = _cmm(v_col_re, v_col_im,
                          ad.transpose(v_col_re), -ad.transpose(v_col_im))
    m1_re = ad.add(ad.sumn(wwh_re, axis=1), vvh_re)
    m1_im = ad.add(ad.sumn(wwh_im, axis=1), vvh_im)
    m1_re4 = ad.reshape(m1_re, (batch, 1, n_t, n_t))
    m1_im4 = ad.reshape(m1_im, (batch, 1, n_t, n_t))
    m2_re = ad.sub(m1_re4, wwh_re)
    m2_im = ad.sub(m1_im4, wwh_im)

    def rate_logdet(m_re, m_im):
        tmp_re, tmp_im = _cmm(a_re, a_im, m_re, m_im)
        s_re, s_im = _cmm(tmp_re, tmp_im,
                          ad.transpose(a_re), -ad.transpose(a_im))
        s_re = ad.add(s_re, ad.constant(sys_cfg.sigma_c2 * np.eye(n_k)))
        return ad.logdet_spd(_widen_pair(s_re, s_im))         # (B, K)

    ld1 = rate_logdet(m1_re4, m1_im4)
    ld2 = rate_logdet(m2_re, m2_im)
    rates = ad.sub(ld1, ld2) * (0.5 / np.log(2.0))            # (B, K)
    sum_rate = ad.sumn(rates, axis=1)                         # (B,)

    # Sensing SINR at the optimal combiner
    d_tq = ad.norm(ad.sub(t_pos, ad.constant(targets[:, None, :])), axis=-1)
    ft_re, ft_im = _steering_pair(d_tq, lam)                  # (B, n_t)
    # e = conj(f_t) .* diag(F)
    e_re = ad.add(ad.mul(ft_re, f_re), ad.mul(ft_im, f_im))
    e_im = ad.sub(ad.mul(ft_re, f_im), ad.mul(ft_im, f_re))
    z_re = ad.sumn(ad.sub(ad.mul(e_re, v_re), ad.mul(e_im, v_im)), axis=1)
    z_im = ad.sumn(ad.add(ad.mul(e_re, v_im), ad.mul(e_im, v_re)), axis=1)
    beam_gain = ad.add(ad.mul(z_re, z_re), ad.mul(z_im, z_im))  # (B,)

    e_row_re = ad.reshape(e_re, (batch, 1, 1, n_t))
    e_row_im = ad.reshape(e_im, (batch, 1, 1, n_t))
    y_re, y_im = _cmm(e_row_re, e_row_im, w_re, w_im)         # (B, K, 1, n_k)
    s_comm = ad.sumn(ad.add(ad.mul(y_re, y_re), ad.mul(y_im, y_im)),
                     axis=(1, 2, 3))                          # (B,)

    fr = precomp["fr"]                                        # (B, n_r)
    frfrh = fr[:, :, None] * fr[:, None, :].conj()
    s3 = ad.reshape(s_comm, (batch, 1, 1))
    b_re = ad.add(ad.mul(s3, ad.constant(frfrh.real)),
                  ad.constant(sys_cfg.sigma_z2 * np.eye(n_r)))
    b_im = ad.mul(s3, ad.constant(frfrh.imag))
    b_wide = _widen_pair(b_re, b_im)                          # (B, 2n_r, 2n_r)
    rhs = np.concatenate([fr.real, fr.imag], axis=1)[:, :, None]
    sol = ad.solve(b_wide, ad.constant(rhs))
    quad = ad.sumn(ad.mul(ad.constant(rhs), sol), axis=(1, 2))  # f_r^H B^-1 f_r
    gamma = ad.mul(beam_gain, quad)                           # (B,)

    # Penalties
    if n_k >= 2:
        dists = []
        for i in range(n_k):
            for j in range(i + 1, n_k):
                diff = ad.sub(u_local[:, :, i, :], u_local[:, :, j, :])
                dists.append(ad.reshape(ad.norm(diff, axis=-1),
                                        (batch, n_users, 1)))
        d_min_k = ad.vmin(ad.concat(dists, axis=2), axis=2)   # (B, K)
        pen_sp = sys_cfg.nu_d * ad.sumn(
            ad.relu(ad.sub(ad.constant(sys_cfg.d_min), d_min_k)), axis=1)
    else:
        d_min_k = ad.constant(np.full((batch, n_users), np.inf))
        pen_sp = ad.constant(np.zeros(batch))
    pen_s = sys_cfg.nu_s * ad.relu(ad.sub(ad.constant(sys_cfg.gamma0), gamma))

    per_sample = ad.add(ad.add(-sum_rate, pen_sp), pen_s)
    loss = ad.mean(per_sample)

    aux = {
        "outputs": out,
        "sum_rate": sum_rate.value.copy(),
        "rates": rates.value.copy(),
        "gamma_s": gamma.value.copy(),
        "spacing_penalty": pen_sp.value.copy(),
        "sinr_penalty": pen_s.value.copy(),
        "min_spacing": d_min_k.value.copy(),
        "gamma_node": gamma,
    }
    return loss, aux
