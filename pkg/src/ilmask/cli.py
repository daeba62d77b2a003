"""``ilmask`` command line: every subcommand reads the same key=value config.

Exit status: 0 on success, 1 when the config or an input file fails
validation, 2 on usage errors (unknown subcommand or config key).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analysis, engine, io
from .core import ConfigError, ContractError, ImportanceMap, ParseError, ValidationError
from .learners import LearnerSpec

log = logging.getLogger("ilmask")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--demos", help="demo file to use instead of generating one")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ilmask", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-demos", parents=[common], help="roll out the expert and save demos")
    g.add_argument("--out", help="demo file (default: <out_dir>/demos.csv)")

    sub.add_parser("run", parents=[common], help="estimate an importance map")

    pr = sub.add_parser("probe", parents=[common], help="returns under coin-flip segment masks")
    pr.add_argument("--n", type=int, default=20, help="number of probe masks")

    c = sub.add_parser("curves", parents=[common], help="top/bottom threshold retraining")
    c.add_argument("--map", required=True, help="map CSV")
    c.add_argument("--percents", default="10,20,30,40,50,60,70,80,90")

    cmp_ = sub.add_parser("compare", parents=[common], help="min-max deviation between two maps")
    cmp_.add_argument("maps", nargs=2)

    t = sub.add_parser("transfer", parents=[common], help="train one learner on another's mask")
    t.add_argument("--map", required=True, help="source map CSV")
    t.add_argument("--target-learner", required=True)
    t.add_argument("--target-map", help="target learner's own map (estimated if absent)")
    t.add_argument("--percent", type=float, default=30.0)

    cb = sub.add_parser("combine", parents=[common], help="average several map CSVs")
    cb.add_argument("maps", nargs="+")
    cb.add_argument("--out", help="output CSV (default: <out_dir>/map_combined.csv)")
    return p


def _config(args):
    pairs = io.read_config_file(args.config) if args.config else []
    pairs += io.parse_assignments(enumerate(args.set, start=1))
    return io.build_config(pairs)


def _out_dir(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _demos(args):
    return io.load_demos(args.demos) if args.demos else None


def cmd_gen_demos(args, cfg):
    cfg.validate()
    path = Path(args.out) if args.out else _out_dir(cfg) / "demos.csv"
    io.save_demos(path, engine.build_demos(cfg))
    print(path)


def cmd_run(args, cfg):
    imap, runlog = engine.run(cfg, _demos(args))
    out = _out_dir(cfg)
    io.export_map(imap, out / "map.csv", "csv")
    io.export_map(imap, out / "map.pgm", "pgm")
    io.save_runlog(out / "runlog.csv", runlog)
    (out / "config.txt").write_text(io.dump_config(cfg))
    print(out / "map.csv")


def cmd_probe(args, cfg):
    stats = engine.variance_probe(cfg, args.n, _demos(args))
    rows = [(i, s.mean, s.std) for i, s in enumerate(stats)]
    io.save_table(_out_dir(cfg) / "probe.csv", ("probe_index", "mean_return", "std_return"), rows)
    means = [s.mean for s in stats]
    print(f"probe means: min={min(means)!r} max={max(means)!r}")


def cmd_curves(args, cfg):
    percents = [float(x) for x in args.percents.split(",")]
    imap = io.load_map_csv(args.map)
    points = analysis.validation_curves(imap, cfg, percents, _demos(args))
    rows = [(pt.percent_kept, pt.mode, pt.seed,
             pt.stats.mean if pt.stats else "", pt.stats.std if pt.stats else "", pt.error or "")
            for pt in points]
    io.save_table(_out_dir(cfg) / "curves.csv",
                  ("percent", "mode", "seed", "mean_return", "std_return", "error"), rows)
    print(_out_dir(cfg) / "curves.csv")


def cmd_compare(args, cfg):
    a, b = (io.load_map_csv(p) for p in args.maps)
    dev, summary = analysis.compare_maps(a, b)
    out = _out_dir(cfg) / "deviation.csv"
    io.export_map(ImportanceMap.from_normalized(dev), out, "csv")
    print(f"mean={summary['mean']!r} max={summary['max']!r}")


def cmd_transfer(args, cfg):
    target = LearnerSpec(args.target_learner, dict(cfg.learner_params)
                         if args.target_learner == cfg.learner_name else {})
    src = io.load_map_csv(args.map)
    tgt = io.load_map_csv(args.target_map) if args.target_map else None
    rounds = {}
    results = analysis.transfer_experiment(src, target, args.percent, cfg, _demos(args),
                                           map_target=tgt, round_returns=rounds)
    rows = [(label, args.percent, cfg.seed, s.mean, s.std) for label, s in results]
    out = _out_dir(cfg)
    io.save_table(out / "transfer.csv", ("condition", "percent", "seed", "mean_return",
                                         "std_return"), rows)
    if rounds:
        io.save_table(out / "transfer_rounds.csv", ("condition", "round", "return"),
                      [(k, i, v) for k, vals in rounds.items() for i, v in enumerate(vals)])
    for label, s in results:
        print(f"{label}: {s.mean!r}")


def cmd_combine(args, cfg):
    combined = engine.combine_maps([io.load_map_csv(p) for p in args.maps])
    path = Path(args.out) if args.out else _out_dir(cfg) / "map_combined.csv"
    io.export_map(combined, path, "csv")
    print(path)


COMMANDS = {"gen-demos": cmd_gen_demos, "run": cmd_run, "probe": cmd_probe,
            "curves": cmd_curves, "compare": cmd_compare, "transfer": cmd_transfer,
            "combine": cmd_combine}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)  # exits 2 on unknown subcommands
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except KeyError as exc:
        parser.error(f"unknown config key {exc.args[0]!r}")
    except (ConfigError, ParseError) as exc:
        key = getattr(exc, "key", None)
        print(f"ilmask: error: {key + ': ' if key else ''}{exc}", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"ilmask: error: {exc.key}: {exc}" if exc.key else f"ilmask: error: {exc}",
              file=sys.stderr)
        return 1
    except (ContractError, ParseError, ValidationError, OSError) as exc:
        print(f"ilmask: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
