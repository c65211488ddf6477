"""Command-line entry point.

Exit codes: 0 on success, 2 on configuration errors, 3 when the numerical
self-test fails.
"""

import argparse
import os
import sys

from .config import load_config
from .errors import ConfigError
from .harness import (
    run_cdf_eval,
    run_training,
    selftest,
    signaling_bits,
    write_cdf,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _add_config_args(p):
    p.add_argument("--config", help="path to a 'section.key = value' file")
    p.add_argument("--profile", choices=("small", "paper"),
                   help="geometry/run-length preset applied before the file")


def build_parser():
    p = argparse.ArgumentParser(
        prog="fdris",
        description="Full-duplex two-RIS MIMO link simulator and DDPG trainer",
    )
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run multi-seed training")
    _add_config_args(t)
    t.add_argument("--out", help="output directory (overrides run.out_dir)")

    e = sub.add_parser("eval-cdf", help="evaluate a checkpoint greedily")
    _add_config_args(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--out", help="CSV path for the reward CDF")

    s = sub.add_parser("signaling", help="print per-step phase feedback bits")
    s.add_argument("--variant", required=True)
    s.add_argument("--n1", type=int, required=True)
    s.add_argument("--n2", type=int, required=True)
    s.add_argument("--bits", type=int, default=2)
    s.add_argument("--groups", type=int, default=9)

    sub.add_parser("selftest", help="run quick numerical sanity checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "selftest":
        results = selftest()
        ok = True
        for name, passed, detail in results:
            tag = "ok" if passed else "FAIL"
            suffix = f" ({detail})" if detail else ""
            print(f"[{tag}] {name}{suffix}")
            ok = ok and passed
        return EXIT_OK if ok else EXIT_NUMERIC

    if args.command == "signaling":
        try:
            print(signaling_bits(args.variant, args.n1, args.n2,
                                 bits=args.bits, groups=args.groups))
        except ValueError as e:
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    try:
        cfg = load_config(path=args.config, profile=args.profile)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "train":
        out_dir = args.out or cfg.out_dir

        def hook(run_index, row):
            print(
                f"run {run_index} episode {row['episode']:4d}  "
                f"reward {row['mean_reward']:.4f}  "
                f"ul {row['mean_rate_bs']:.4f}  dl {row['mean_rate_dl']:.4f}",
                flush=True,
            )

        run_training(cfg, out_dir=out_dir, episode_hook=hook)
        print(f"wrote metrics and checkpoints to {out_dir}")
        return EXIT_OK

    if args.command == "eval-cdf":
        rewards = run_cdf_eval(cfg, args.checkpoint, episodes=args.episodes)
        out = args.out or os.path.join(cfg.out_dir, "cdf.csv")
        os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
        write_cdf(out, rewards)
        print(f"median reward {float(rewards[rewards.size // 2]):.4f}; "
              f"CDF written to {out}")
        return EXIT_OK

    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
