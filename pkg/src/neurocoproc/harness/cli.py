"""Command-line interface.

Exit codes: 0 success, 1 usage error (bad arguments, missing or invalid
config), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import coproc, decoders, mimo
from . import persist
from .check import run_checks
from .config import SCENARIOS, ConfigError, default_config, default_suite, load_config, validate
from .scenarios import ScenarioError, run_scenario

USAGE, RUNTIME = 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE)


def build_parser():
    p = _Parser(prog="neurocoproc", description="Closed-loop co-processor simulations.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    r = sub.add_parser("run", help="run a scenario config (or the default suite)")
    r.add_argument("config", nargs="?", help="scenario config JSON")
    r.add_argument("--out", help="override the configured output directory")
    r.add_argument("--suite", action="store_true", help="run the six default scenarios")
    r.add_argument("--seed", type=int, default=0, help="suite seed (with --suite)")
    r.add_argument("--root", default="runs", help="suite output root (with --suite)")
    r.add_argument("--jobs", type=int, default=1, help="parallel processes for --suite")

    f = sub.add_parser("fit", help="fit a model from arrays in an .npz file")
    f.add_argument("what", choices=sorted(FITTERS))
    f.add_argument("data", help=".npz file; see README for the expected keys")
    f.add_argument("--out", help="weights file (default: <what>.json)")
    f.add_argument("--mk", type=int, default=8, help="feedforward kernel memory (mimo)")
    f.add_argument("--mh", type=int, default=4, help="feedback kernel memory (mimo)")
    f.add_argument("--hidden", type=int, default=0, help="hidden units (en; 0 = linear)")
    f.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("eval", help="regenerate an artifact from its config snapshot")
    e.add_argument("artifact", help="artifact directory written by run")

    sub.add_parser("check", help="run the oracle self-tests")

    c = sub.add_parser("configs", help="write default configs for every scenario")
    c.add_argument("directory")
    c.add_argument("--seed", type=int, default=0)
    return p


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _need(data, *keys):
    missing = [k for k in keys if k not in data]
    if missing:
        raise UsageError(f"data file lacks arrays {missing}")
    return [data[k] for k in keys]


def _fit_kalman(data, args):
    return decoders.fit_kalman(*_need(data, "states", "frames"))


def _fit_linear(data, args):
    return decoders.fit_linear_decoder(*_need(data, "rates", "velocities"))


def _fit_lda(data, args):
    return decoders.lda_fit(*_need(data, "samples", "labels"))


def _fit_hinge(data, args):
    return decoders.hinge_fit(*_need(data, "features", "labels"))


def _fit_mimo(data, args):
    x, y = _need(data, "x", "y")
    return mimo.mimo_fit(x, y, args.mk, args.mh)


def _fit_en(data, args):
    stims, behaviors = _need(data, "stims", "behaviors")
    stims, behaviors = np.atleast_2d(stims), np.atleast_2d(behaviors)
    sizes = [stims.shape[1]] + ([args.hidden] if args.hidden else []) + [behaviors.shape[1]]
    en = coproc.make_net(sizes, "identity", seed=args.seed)
    cfg = coproc.TrainConfig(learning_rate=0.5, epochs=500, batch_size=len(stims),
                             seed=args.seed)
    res = coproc.train_en(en, stims, behaviors, cfg)
    print(f"held-out mse: {res.loss:.6g}")
    return res.net


FITTERS = {"kalman": _fit_kalman, "linear": _fit_linear, "lda": _fit_lda,
           "hinge": _fit_hinge, "mimo": _fit_mimo, "en": _fit_en}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _run_one(doc, out):
    art = run_scenario(validate(doc), out)
    return str(art.path), len(art.metrics_rows)


def cmd_run(args):
    if args.suite:
        if args.config:
            raise UsageError("give either a config file or --suite, not both")
        docs = [c.to_dict() for c in default_suite(args.seed, args.root)]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                results = list(pool.map(_run_one, docs, [None] * len(docs)))
        else:
            results = [_run_one(d, None) for d in docs]
        for path, n in results:
            print(f"wrote {path} ({n} metric rows)")
        return 0
    if not args.config:
        raise UsageError("run needs a config file or --suite")
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cfg = load_config(path)
    art = run_scenario(cfg, args.out)
    print(f"wrote {art.path} ({len(art.metrics_rows)} metric rows)")
    return 0


def cmd_fit(args):
    path = Path(args.data)
    if not path.is_file():
        raise UsageError(f"data file not found: {path}")
    with np.load(path) as npz:
        data = {k: npz[k] for k in npz.files}
    model = FITTERS[args.what](data, args)
    out = persist.persist_weights(model, args.out or f"{args.what}.json")
    print(f"wrote {out}")
    return 0


def cmd_eval(args):
    root = Path(args.artifact)
    snap = root / "config.json"
    if not snap.is_file():
        raise UsageError(f"no config snapshot in {root}")
    cfg = validate(json.loads(snap.read_text()))
    with tempfile.TemporaryDirectory() as tmp:
        fresh = run_scenario(cfg, Path(tmp) / "run")
        same = {}
        for name in ("metrics.csv", "manifest.json"):
            old = root / name
            same[name] = old.is_file() and old.read_bytes() == (fresh.path / name).read_bytes()
    for name, ok in same.items():
        print(f"{name}: {'identical' if ok else 'DIFFERS'}")
    stale = persist.verify_manifest(root) if (root / "manifest.json").is_file() else ["*"]
    if stale:
        print(f"files not matching the stored manifest: {', '.join(stale)}")
    return 0 if all(same.values()) and not stale else RUNTIME


def cmd_check(args):
    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return 0 if all(ok for _, ok, _ in results) else RUNTIME


def cmd_configs(args):
    d = Path(args.directory)
    d.mkdir(parents=True, exist_ok=True)
    for s in SCENARIOS:
        cfg = default_config(s, args.seed, f"runs/{s}")
        (d / f"{s}.json").write_text(persist.dumps(cfg.to_dict()))
        print(f"wrote {d / (s + '.json')}")
    return 0


COMMANDS = {"run": cmd_run, "fit": cmd_fit, "eval": cmd_eval, "check": cmd_check,
            "configs": cmd_configs}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code not in (0, None) else 0
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"neurocoproc {args.command}: {exc}", file=sys.stderr)
        return USAGE
    except (ScenarioError, persist.SchemaError, ValueError, OSError) as exc:
        print(f"neurocoproc {args.command}: {exc}", file=sys.stderr)
        return RUNTIME


if __name__ == "__main__":
    sys.exit(main())
