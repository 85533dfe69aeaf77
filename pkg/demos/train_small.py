"""Train the policy network on a scaled-down system and watch the loss.

Uses a 3-waveguide / 1-user setup so the whole run takes well under a
minute.  Prints the loss trajectory, then evaluates both variants on a
held-out test set.  The proposed variant learns antenna positions on
top of the beamformers; the fixed baseline keeps the uniform grids.
"""

from pisac import SystemConfig, TrainConfig, evaluate, make_dataset, train

cfg = SystemConfig(n_t=3, n_r=2, n_k=2, n_users=1, n_scatterers=1)
tcfg = TrainConfig(train_size=100, test_size=50, batch_size=25, epochs=40)

for variant in ("proposed", "fix-ant"):
    print(f"--- {variant} ---")
    params, state, history = train(cfg, tcfg, variant)
    for row in history[::8] + [history[-1]]:
        print(f"  epoch {row['epoch']:3d}  loss {row['mean_loss']:9.4f}  "
              f"sum-rate {row['mean_sum_rate']:7.4f}  "
              f"penalties {row['spacing_penalty']:.3f}/"
              f"{row['sinr_penalty']:.3f}")
    test = make_dataset(cfg, tcfg.data_seed, tcfg.test_size, stream="test")
    agg, _ = evaluate(params, test, cfg, variant)
    print(f"  test: sum-rate {agg['mean_sum_rate']:.4f}, "
          f"SINR satisfied on {agg['sinr_satisfaction']:.0%}, "
          f"spacing ok on {agg['spacing_satisfaction']:.0%}")
