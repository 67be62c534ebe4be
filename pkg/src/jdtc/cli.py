"""Command-line front end.

    jdtc run centralized --config ref.yaml --trials 10 --seed 7 --out c.csv
    jdtc run distributed --preset paper-reference --L 1 --out d.csv
    jdtc show-config --preset paper-reference > ref.yaml

Distributed runs write the network-average table to ``--out`` and one table
per node next to it (``<stem>_node<id>.csv``).
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .config import PRESETS, ConfigError, ScenarioConfig, apply_overrides, from_dict, parse_override
from .sim import MetricsFrame, generate_truth, monte_carlo

log = logging.getLogger("jdtc")


def csv_columns(frame: MetricsFrame, node: bool = False) -> list[str]:
    cols = ["k"] + (["node_id"] if node else []) + ["ospa_m", "r"]
    cols += [f"gamma_c{c}" for c in frame.class_ids]
    cols += [f"beta_c{c}_m{m}" for c, m in _beta_slots(frame)]
    return cols + ["est_class", "est_mode"]


def _beta_slots(frame: MetricsFrame):
    # a single-mode class has beta identically 1; it gets no column
    counts = {c: sum(1 for cc, _ in frame.slots if cc == c) for c in frame.class_ids}
    return [(c, m) for c, m in frame.slots if counts[c] > 1]


def _fmt(x: float) -> str:
    return repr(float(x))


def format_csv(frame: MetricsFrame, header: Sequence[str], node_id: Optional[int] = None) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write(",".join(csv_columns(frame, node_id is not None)) + "\n")
    beta_idx = [frame.slots.index(s) for s in _beta_slots(frame)]
    for i, k in enumerate(frame.k):
        row = [str(int(k))]
        if node_id is not None:
            row.append(str(node_id))
        row += [_fmt(frame.ospa[i]), _fmt(frame.r[i])]
        row += [_fmt(v) for v in frame.gamma[i]]
        row += [_fmt(frame.beta[i, j]) for j in beta_idx]
        row += [str(int(frame.est_class[i])), str(int(frame.est_mode[i]))]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def effective_config(args) -> ScenarioConfig:
    """Preset or default, then file, then flags and ``--override`` pairs."""
    base = PRESETS[args.preset]() if args.preset else ScenarioConfig()
    data: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{args.config}:{mark.line + 1}:{mark.column + 1}" if mark else args.config
            raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    overrides = dict(parse_override(o) for o in args.override or [])
    for flag, key in (("trials", "trials"), ("seed", "seed"), ("L", "L"), ("topology_radius", "radius")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.setdefault(key, value)
    return from_dict(apply_overrides(data, overrides), base)


def _header(cfg: ScenarioConfig, kind: str) -> list[str]:
    lines = [f"jdtc run {kind}", f"seed: {cfg.seed}", f"trials: {cfg.trials}", "effective config:"]
    lines += ["  " + ln for ln in cfg.to_yaml().rstrip("\n").split("\n")]
    return lines


def cmd_run(args) -> int:
    cfg = effective_config(args)
    kind = args.kind
    result = monte_carlo(cfg, cfg.trials, cfg.seed, kind, workers=args.workers)
    out = Path(args.out or f"{kind}.csv")
    header = _header(cfg, kind)
    _write(out, format_csv(result.mean, header))
    if kind == "distributed":
        for i, frame in sorted(result.node_means.items()):
            _write(out.with_name(f"{out.stem}_node{i}{out.suffix or '.csv'}"), format_csv(frame, header, node_id=i))
    truth = generate_truth(cfg)
    lo, hi = truth.window
    window = slice(lo - 1, hi) if hi >= lo else slice(0, 0)
    mean_ospa = float(np.mean(result.mean.ospa[window])) if hi >= lo else float("nan")
    print(
        f"{kind}: trials={cfg.trials} seed={cfg.seed} mean_ospa_m={mean_ospa:.3f} "
        f"class_decision_rate={result.decision_rate(truth):.3f} out={out}"
    )
    return 0


def cmd_show_config(args) -> int:
    sys.stdout.write(effective_config(args).to_yaml())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jdtc", description="JDTC Bernoulli filter experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML scenario file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in base configuration")
        p.add_argument("--override", action="append", metavar="KEY=VALUE", help="dotted key or alias; repeatable")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--L", type=int, dest="L", help="consensus steps")
        p.add_argument("--topology-radius", type=float, dest="topology_radius", help="graph radius in metres")

    run = sub.add_parser("run", help="run a Monte-Carlo experiment")
    run.add_argument("kind", choices=["centralized", "distributed"])
    run.add_argument("--out", help="output CSV path")
    run.add_argument("--workers", type=int, default=1, help="processes for Monte-Carlo trials")
    common(run)
    run.set_defaults(func=cmd_run)

    show = sub.add_parser("show-config", help="print the effective configuration as YAML")
    common(show)
    show.set_defaults(func=cmd_show_config)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError, KeyError, ArithmeticError) as exc:
        print(f"jdtc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
