"""Command-line surface: simulate, gen-dataset, train, eval, predict, mpc-run, render."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import dataset as ds
from . import neuro
from .core import DEFAULT_CONSTANTS, FIELD_NAMES, denormalize_field
from .mpc import ObjectiveParams, RegionOfInterest, load_scenario, run_mpc, violation_count
from .procsim import ForgingStrategy, StrategyBoundsError, DEFAULT_PARAMS
from .surrogate import SurrogateModel, evaluate, load_model, save_model

__all__ = ["main"]

CORE_REGION = RegionOfInterest()


def _fail(message: str, code: int = 1) -> int:
    sys.stderr.write(json.dumps({"error": message}) + "\n")
    return code


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _write_stamp(path: str, seed, payload: dict) -> None:
    stamp = {
        "seed": seed,
        "config_hash": _config_hash(payload),
        "format_versions": {"dataset": ds.FORMAT_VERSION, "model": 1},
    }
    with open(path, "w") as fh:
        json.dump(stamp, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _guard_output(path: str, force: bool) -> str | None:
    """Refuse to clobber an existing non-empty file or directory."""
    if force or not os.path.exists(path):
        return None
    if os.path.isdir(path) and not os.listdir(path):
        return None
    return f"output {path} exists; pass --force to overwrite"


def write_pgm(path: str, values01: np.ndarray) -> None:
    """8-bit ASCII portable graymap of a [0, 1] field."""
    gray = np.clip(np.rint(values01 * 255.0), 0, 255).astype(int)
    lines = [f"P2", f"{gray.shape[1]} {gray.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in gray]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_field_csv(path: str, field: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for i in range(field.shape[0]):
            for j in range(field.shape[1]):
                fh.write(f"{i},{j},{field[i, j]!r}\n")


def _strategy_from_args(args) -> ForgingStrategy:
    base = {}
    if getattr(args, "strategy", None):
        import configparser
        cp = configparser.ConfigParser()
        if not cp.read(args.strategy):
            raise OSError(f"cannot read strategy file {args.strategy}")
        plan = cp["plan"] if "plan" in cp else cp[cp.sections()[0]]
        base = {k: float(v) for k, v in plan.items()}
    oven = args.oven if args.oven is not None else base.get("oven", 1200.0)
    transport = args.transport if args.transport is not None else base.get("transport", 0.0)
    wait = args.wait or [base.get("wait1", 10.0), base.get("wait2", 10.0), base.get("wait3", 10.0)]
    ups = args.upsetting or [base.get("upsetting1", 0.1), base.get("upsetting2", 0.1),
                             base.get("upsetting3", 0.1)]
    return ForgingStrategy(float(oven), float(transport),
                           tuple(float(w) for w in wait), tuple(float(u) for u in ups))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    strategy = _strategy_from_args(args)
    violations = strategy.violations()
    if violations:
        return _fail("; ".join(violations), 2)
    guard = _guard_output(args.out, args.force)
    if guard:
        return _fail(guard, 2)
    os.makedirs(args.out, exist_ok=True)
    records, snaps = ds.run_records(strategy)
    records.tofile(os.path.join(args.out, "records.bin"))
    core = CORE_REGION.core_mask()
    summary = {
        "strategy": list(strategy.as_vector()),
        "core_mean_grain": [float(s.grain[core].mean()) for s in snaps],
        "pairs_per_run": ds.PAIRS_PER_RUN,
        "record_floats": ds.RECORD_FLOATS,
    }
    for k, snap in enumerate(snaps):
        with open(os.path.join(args.out, f"snapshot_{k}.csv"), "w") as fh:
            fh.write("row,col," + ",".join(FIELD_NAMES) + "\n")
            fields = snap.fields()
            for i in range(snap.grid.n_axial):
                for j in range(snap.grid.n_radial):
                    vals = ",".join(repr(float(fields[name][i, j])) for name in FIELD_NAMES)
                    fh.write(f"{i},{j},{vals}\n")
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_stamp(os.path.join(args.out, "stamp.json"), None,
                 {"cmd": "simulate", "strategy": list(strategy.as_vector())})
    print(f"wrote 8 snapshots to {args.out}")
    return 0


def cmd_gen_dataset(args) -> int:
    guard = _guard_output(args.out, args.force)
    if guard:
        return _fail(guard, 2)
    manifest = ds.generate(args.out, run_count=args.runs, seed=args.seed, workers=args.workers)
    _write_stamp(os.path.join(args.out, "stamp.json"), args.seed,
                 {"cmd": "gen-dataset", "runs": args.runs, "seed": args.seed})
    n = manifest.run_count * manifest.pairs_per_run
    print(f"wrote {n} records ({manifest.run_count} runs) to {args.out}")
    return 0


def cmd_train(args) -> int:
    guard = _guard_output(args.out, args.force)
    if guard:
        return _fail(guard, 2)
    data = ds.load_dataset(args.dataset)
    xc, xs, y = data.split_arrays("train")
    vc, vs, vy = data.split_arrays("val")
    model = SurrogateModel(seed=args.seed)
    history = neuro.train(model, (xc, xs), y, (vc, vs), vy,
                          epochs=args.epochs, batch_size=args.batch,
                          lr=args.lr, seed=args.seed)
    save_model(model, args.out)
    with open(args.out + ".losses.json", "w") as fh:
        json.dump({"train_mae": history.train_mae, "val_mae": history.val_mae},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_stamp(args.out + ".stamp.json", args.seed,
                 {"cmd": "train", "epochs": args.epochs, "batch": args.batch,
                  "lr": args.lr, "seed": args.seed, "dataset": os.path.abspath(args.dataset)})
    if history.val_mae:
        print(f"trained {args.epochs} epochs; final val MAE {history.val_mae[-1]:.5f}")
    else:
        print(f"trained {args.epochs} epochs")
    return 0


def cmd_eval(args) -> int:
    data = ds.load_dataset(args.dataset)
    model = load_model(args.model)
    xc, xs, y = data.split_arrays(args.split)
    report = evaluate(model, xc, xs, y, data.constants)
    print(report.table())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.as_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_predict(args) -> int:
    data = ds.load_dataset(args.dataset)
    model = load_model(args.model)
    if not 0 <= args.index < data.records.shape[0]:
        return _fail(f"record index {args.index} outside dataset of {data.records.shape[0]}", 2)
    rec = data.records[args.index].astype(np.float64)
    contours = rec[ds.CONTOUR_BLOCK[0]:ds.CONTOUR_BLOCK[1]].reshape(3, 31)
    strategy = rec[ds.STRATEGY_BLOCK[0]:ds.STRATEGY_BLOCK[1]]
    target = rec[ds.TARGET_BLOCK[0]:ds.TARGET_BLOCK[1]].reshape(6, 21, 11)
    pred = model.predict(contours.T, strategy)
    for k, name in enumerate(FIELD_NAMES):
        mae = float(np.abs(pred[k] - target[k]).mean())
        print(f"{name:<13} MAE {mae:.5f} (normalized)")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("field,row,col,predicted,target\n")
            for k, name in enumerate(FIELD_NAMES):
                for i in range(21):
                    for j in range(11):
                        fh.write(f"{name},{i},{j},{pred[k, i, j]!r},{target[k, i, j]!r}\n")
    return 0


def cmd_mpc_run(args) -> int:
    guard = _guard_output(args.out, args.force)
    if guard:
        return _fail(guard, 2)
    scenario = load_scenario(args.scenario)
    model = load_model(args.model)
    result = run_mpc(scenario, model)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "trace.json"), "w") as fh:
        json.dump(result.trace(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, "timings.json"), "w") as fh:
        json.dump(result.timings(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    constants = DEFAULT_CONSTANTS
    lo = constants.minimum("grain")
    span = constants.span("grain")
    norm = np.clip((result.final_grain - lo) / span, 0.0, 1.0)
    write_pgm(os.path.join(args.out, "verified_grain.pgm"), norm)
    overlay = (result.final_grain > scenario.objective_params.threshold) & \
        scenario.region.mask(result.final_grain.shape)
    write_pgm(os.path.join(args.out, "verified_grain_overlay.pgm"), overlay.astype(float))
    write_field_csv(os.path.join(args.out, "verified_grain.csv"), result.final_grain)
    _write_stamp(os.path.join(args.out, "stamp.json"), scenario.anneal.seed,
                 {"cmd": "mpc-run", "scenario": os.path.abspath(args.scenario),
                  "model": os.path.abspath(args.model)})
    waits = [result.applied_controls[k] for k in (2, 4, 6)]
    print(f"applied waits: {waits}; verified violations: {result.verified_violations}"
          f" ({'feasible' if result.verified_feasible else 'infeasible'})")
    return 0 if result.verified_feasible else 3


def cmd_render(args) -> int:
    if args.field not in FIELD_NAMES:
        return _fail(f"unknown field {args.field!r}; choose from {', '.join(FIELD_NAMES)}", 2)
    rec_path = os.path.join(args.input, "records.bin")
    if not os.path.exists(rec_path):
        return _fail(f"no records.bin under {args.input}", 2)
    records = np.fromfile(rec_path, dtype="<f4").reshape(-1, ds.RECORD_FLOATS)
    if not 0 <= args.snapshot < records.shape[0]:
        return _fail(f"snapshot {args.snapshot} outside 0..{records.shape[0] - 1}", 2)
    guard = _guard_output(args.out, args.force)
    if guard:
        return _fail(guard, 2)
    tensor = records[args.snapshot, ds.TARGET_BLOCK[0]:ds.TARGET_BLOCK[1]] \
        .astype(np.float64).reshape(6, 21, 11)
    k = FIELD_NAMES.index(args.field)
    write_pgm(args.out, tensor[k])
    phys = denormalize_field(tensor[k], DEFAULT_CONSTANTS, args.field)
    base, _ = os.path.splitext(args.out)
    write_field_csv(base + ".csv", phys)
    if args.threshold is not None:
        overlay = phys > args.threshold
        write_pgm(base + "_overlay.pgm", overlay.astype(float))
        region_count = int(np.sum(overlay & CORE_REGION.mask(phys.shape)))
        print(f"threshold {args.threshold:g}: {int(overlay.sum())} nodes above"
              f" ({region_count} in region+margin)")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hotforge",
                                 description="simulate, learn and control the three-stroke"
                                             " hot upsetting process")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the physics oracle for one strategy")
    p.add_argument("--strategy", help="ini file with a [plan] section")
    p.add_argument("--oven", type=float, default=None)
    p.add_argument("--transport", type=float, default=None)
    p.add_argument("--wait", type=float, nargs=3, default=None)
    p.add_argument("--upsetting", type=float, nargs=3, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("gen-dataset", help="generate the training corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="process count (default: HOTFORGE_WORKERS or cpu count)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_gen_dataset)

    p = sub.add_parser("train", help="train the surrogate on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="per-field error report on a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out", default=None, help="also write the report as JSON")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="predict one stored record")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", default=None, help="CSV of predicted vs target values")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("mpc-run", help="run the shrinking-horizon controller")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_mpc_run)

    p = sub.add_parser("render", help="render a field of a simulated snapshot")
    p.add_argument("--in", dest="input", required=True, help="simulate output directory")
    p.add_argument("--field", required=True)
    p.add_argument("--snapshot", type=int, default=6)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StrategyBoundsError as exc:
        return _fail(str(exc), 2)
    except (ValueError, KeyError) as exc:
        return _fail(str(exc), 2)
    except OSError as exc:
        return _fail(str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
