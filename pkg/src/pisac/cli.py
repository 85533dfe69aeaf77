"""Command-line driver for the end-to-end experiments.

Subcommands: gen-data, train, eval, sweep-power, sweep-gamma, report.
Every artifact (scenario CSV, per-epoch history, sweep tables, binary
checkpoints) is a pure function of the config file and the seed
overrides.  Exit codes: 0 success, 1 bad configuration, 2 numerical
abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .network import VARIANT_FIX_ANT, VARIANT_PROPOSED
from .scenario import SystemConfig, sample_scenario
from .training import (NumericalAbortError, TrainConfig, evaluate,
                       load_checkpoint, make_dataset, save_checkpoint, train)

_SYS_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}

HISTORY_HEADER = "epoch,mean_loss,mean_sum_rate,spacing_penalty,sinr_penalty"
SWEEP_POWER_HEADER = "p_max_w,variant,mean_sum_rate,sinr_satisfaction"
SWEEP_GAMMA_HEADER = "gamma0,mean_sum_rate,mean_ps,sinr_satisfaction"


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    """Numbers with 12 significant digits, integers verbatim."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.12g}"


def parse_config_file(path):
    """Flat `key = value` file; values are JSON literals.

    Keys must name SystemConfig or TrainConfig fields; anything else is
    an error.  Returns (SystemConfig kwargs, TrainConfig kwargs).
    """
    sys_kw = {}
    train_kw = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            parsed = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}")
        if key in _SYS_FIELDS:
            sys_kw[key] = parsed
        elif key in _TRAIN_FIELDS:
            train_kw[key] = parsed
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return sys_kw, train_kw


def load_configs(path, seed=None):
    sys_kw, train_kw = parse_config_file(path) if path else ({}, {})
    try:
        sys_cfg = SystemConfig(**sys_kw)
        train_cfg = TrainConfig(**train_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if seed is not None:
        sys_cfg.seed = seed
        train_cfg.data_seed = seed
        train_cfg.init_seed = seed
        train_cfg.shuffle_seed = seed
    return sys_cfg, train_cfg


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row) + "\n")


def write_history_csv(path, history):
    _write_csv(path, HISTORY_HEADER,
               [(h["epoch"], h["mean_loss"], h["mean_sum_rate"],
                 h["spacing_penalty"], h["sinr_penalty"]) for h in history])


def write_sweep_power_csv(path, rows):
    _write_csv(path, SWEEP_POWER_HEADER, rows)


def write_sweep_gamma_csv(path, rows):
    _write_csv(path, SWEEP_GAMMA_HEADER, rows)


def write_scenarios_csv(path, scenarios, config: SystemConfig):
    cols = ["index"]
    for k in range(config.n_users):
        cols += [f"b{k + 1}_{ax}" for ax in "xyz"]
    for i in range(config.n_scatterers):
        cols += [f"xi{i + 1}_{ax}" for ax in "xyz"]
    cols += [f"qp_{ax}" for ax in "xyz"]
    rows = []
    for i, scen in enumerate(scenarios):
        flat = ([i] + list(scen.user_origins.reshape(-1))
                + list(scen.scatterers.reshape(-1)) + list(scen.target))
        rows.append(flat)
    _write_csv(path, ",".join(cols), rows)


def write_report(out_dir, results: dict):
    """Regenerate every CSV artifact from a results dictionary."""
    if "history" in results:
        write_history_csv(os.path.join(out_dir, "history.csv"),
                          results["history"])
    if "sweep_power" in results:
        write_sweep_power_csv(os.path.join(out_dir, "sweep_power.csv"),
                              results["sweep_power"])
    if "sweep_gamma" in results:
        write_sweep_gamma_csv(os.path.join(out_dir, "sweep_gamma.csv"),
                              results["sweep_gamma"])


def _save_results(out_dir, results):
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(results, fh, indent=1, sort_keys=True)


def _load_results(out_dir):
    with open(os.path.join(out_dir, "results.json")) as fh:
        return json.load(fh)


def _train_and_eval(sys_cfg, train_cfg, variant):
    params, state, history = train(sys_cfg, train_cfg, variant)
    test = make_dataset(sys_cfg, train_cfg.data_seed, train_cfg.test_size,
                        stream="test")
    agg, _ = evaluate(params, test, sys_cfg, variant)
    return params, state, history, agg


def cmd_gen_data(args):
    sys_cfg, _ = load_configs(args.config, args.seed)
    scenarios = make_dataset(sys_cfg, sys_cfg.seed, args.n)
    os.makedirs(args.out, exist_ok=True)
    write_scenarios_csv(os.path.join(args.out, "scenarios.csv"),
                        scenarios, sys_cfg)
    return 0


def cmd_train(args):
    sys_cfg, train_cfg = load_configs(args.config, args.seed)
    os.makedirs(args.out, exist_ok=True)
    params, state, history, agg = _train_and_eval(sys_cfg, train_cfg,
                                                  args.variant)
    write_history_csv(os.path.join(args.out, "history.csv"), history)
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), sys_cfg,
                    train_cfg, params, state, train_cfg.epochs, args.variant)
    _save_results(args.out, {"history": history, "eval": agg,
                             "variant": args.variant})
    return 0


def cmd_eval(args):
    ckpt_path = args.checkpoint or os.path.join(args.out, "checkpoint.bin")
    sys_cfg, train_cfg, params, _, _, variant = load_checkpoint(ckpt_path)
    if args.seed is not None:
        train_cfg.data_seed = args.seed
    test = make_dataset(sys_cfg, train_cfg.data_seed, train_cfg.test_size,
                        stream="test")
    agg, _ = evaluate(params, test, sys_cfg, variant)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "eval.json"), "w") as fh:
        json.dump(agg, fh, indent=1, sort_keys=True)
    print(json.dumps(agg, sort_keys=True))
    return 0


def cmd_sweep_power(args):
    sys_cfg, train_cfg = load_configs(args.config, args.seed)
    p_list = [float(v) for v in args.pmax_list.split(",")]
    rows = []
    for p_max in p_list:
        for variant in (VARIANT_PROPOSED, VARIANT_FIX_ANT):
            cfg = dataclasses.replace(sys_cfg, p_max=p_max)
            _, _, _, agg = _train_and_eval(cfg, train_cfg, variant)
            rows.append((p_max, variant, agg["mean_sum_rate"],
                         agg["sinr_satisfaction"]))
    os.makedirs(args.out, exist_ok=True)
    write_sweep_power_csv(os.path.join(args.out, "sweep_power.csv"), rows)
    _save_results(args.out, {"sweep_power": rows})
    return 0


def cmd_sweep_gamma(args):
    sys_cfg, train_cfg = load_configs(args.config, args.seed)
    g_list = [float(v) for v in args.gamma_list.split(",")]
    rows = []
    for gamma0 in g_list:
        cfg = dataclasses.replace(sys_cfg, gamma0=gamma0)
        _, _, _, agg = _train_and_eval(cfg, train_cfg, VARIANT_PROPOSED)
        rows.append((gamma0, agg["mean_sum_rate"], agg["mean_ps"],
                     agg["sinr_satisfaction"]))
    os.makedirs(args.out, exist_ok=True)
    write_sweep_gamma_csv(os.path.join(args.out, "sweep_gamma.csv"), rows)
    _save_results(args.out, {"sweep_gamma": rows})
    return 0


def cmd_report(args):
    results = _load_results(args.out)
    write_report(args.out, results)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pisac",
        description="ISAC pinching/movable-antenna experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key = value file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen-data", help="write a scenario CSV")
    common(p)
    p.add_argument("--n", type=int, default=100)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one variant, write history")
    common(p)
    p.add_argument("--variant", choices=[VARIANT_PROPOSED, VARIANT_FIX_ANT],
                   default=VARIANT_PROPOSED)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test set")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-power", help="train/evaluate over P_max values")
    common(p)
    p.add_argument("--pmax-list", default="0.01,0.1,1")
    p.set_defaults(func=cmd_sweep_power)

    p = sub.add_parser("sweep-gamma",
                       help="train/evaluate over SINR thresholds")
    common(p)
    p.add_argument("--gamma-list", default="0.01")
    p.set_defaults(func=cmd_sweep_gamma)

    p = sub.add_parser("report", help="regenerate CSVs from results.json")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalAbortError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
