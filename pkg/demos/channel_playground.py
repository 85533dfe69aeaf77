"""Walk through the physics layer on one random drop.

Samples an environment, places the pinching antennas and the user
antennas at random, then prints the quantities the optimizer will later
care about: per-user rates (computed two independent ways), the sensing
covariance, and how much the closed-form combiner buys over random ones.
"""

import numpy as np

from pisac import (BeamformingSet, CMatrix, MAPlacement, PAPlacement,
                   SystemConfig, optimal_combiner, receive_positions,
                   sample_scenario, sensing_channel, sensing_covariance,
                   sensing_sinr, target_steering, user_channel, user_rate,
                   waveguide_matrix)

rng = np.random.default_rng(7)
cfg = SystemConfig()

scen = sample_scenario(cfg, seed=7)
print("user origins:\n", scen.user_origins)
print("target:", scen.target)

# random placements inside the feasible regions
pa = PAPlacement(rng.uniform(0, cfg.d_t, cfg.n_t))
ma = MAPlacement(rng.uniform(0, cfg.d_k, (cfg.n_users, cfg.n_k, 2)))

# random beamformers with the power budget tight
w = [rng.standard_normal((cfg.n_t, cfg.n_k))
     + 1j * rng.standard_normal((cfg.n_t, cfg.n_k))
     for _ in range(cfg.n_users)]
tot = np.sqrt(sum(np.abs(wk) ** 2 for wk in w).sum())
w = [CMatrix.from_complex(wk * np.sqrt(cfg.p_max) / tot) for wk in w]
v = rng.standard_normal(cfg.n_t) + 1j * rng.standard_normal(cfg.n_t)
beams = BeamformingSet(
    w=w, v=CMatrix.from_complex((v / np.linalg.norm(v)).reshape(-1, 1)))

f = waveguide_matrix(pa, cfg)
for k in range(cfg.n_users):
    h = user_channel(pa, ma, scen, cfg, k)
    rc = user_rate(k, h, f, beams, cfg.sigma_c2, method="complex")
    rw = user_rate(k, h, f, beams, cfg.sigma_c2, method="widened")
    print(f"user {k}: rate {rc:.4f} bit/s/Hz "
          f"(widened path differs by {abs(rc - rw):.2e})")

# sensing side
f_t = target_steering(pa.positions(cfg), scen.target, cfg.wavelength)
f_r = target_steering(receive_positions(cfg), scen.target, cfg.wavelength)
g = sensing_channel(f_t, f_r)
b = sensing_covariance(g, f, beams, cfg.sigma_z2)
d = optimal_combiner(b, f_r)
best = sensing_sinr(d, g, f, beams.v, b)
print(f"sensing SINR at the closed-form combiner: {best:.4e}")

randoms = []
for _ in range(2000):
    z = rng.standard_normal(cfg.n_r) + 1j * rng.standard_normal(cfg.n_r)
    dr = CMatrix.from_complex((z / np.linalg.norm(z)).reshape(-1, 1))
    randoms.append(sensing_sinr(dr, g, f, beams.v, b))
print(f"best of 2000 random unit combiners:         {max(randoms):.4e}")
print(f"median random combiner:                     {np.median(randoms):.4e}")
