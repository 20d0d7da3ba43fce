"""Command-line entry point.

Subcommands: generate-data, encode, freq, dist, train, translate,
evaluate, report. Every run writes a resolved-config snapshot next to its
outputs. Exit codes: 0 success, 2 bad override/config, 3 missing files.

FDCG_THREADS caps BLAS parallelism; it must be applied before numpy loads,
so heavy imports happen inside main().
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3


def _apply_thread_cap():
    cap = os.environ.get("FDCG_THREADS")
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _parse_override(text: str):
    if "=" not in text:
        raise ValueError(f"override {text!r} must look like key=value")
    key, val = text.split("=", 1)
    return key.strip(), val.strip()


def _coerce(key: str, val: str, fields: dict):
    # dataclass annotations are strings under `from __future__ import annotations`
    text = str(fields[key].type)
    if "list[int]" in text:
        return [int(v) for v in val.split(",") if v != ""]
    if "list[float]" in text:
        return [float(v) for v in val.split(",") if v != ""]
    if "bool" in text:
        return val.lower() in ("1", "true", "yes", "on")
    if "int" in text:
        return int(val)
    if "float" in text:
        return float(val)
    return val


def load_config_file(path: Path) -> dict:
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as f:
            return tomllib.load(f)
    return json.loads(path.read_text())


def resolve_config(args):
    from .divergence import ConfigError
    from .training import ExperimentConfig, config_from_dict, get_experiment

    base: dict = {}
    if getattr(args, "config", None):
        base = load_config_file(Path(args.config))
    if getattr(args, "experiment", None):
        cfg = get_experiment(args.experiment)
        base = {**cfg.to_dict(), **base}
    fields = ExperimentConfig.__dataclass_fields__
    for ov in getattr(args, "override", None) or []:
        key, val = _parse_override(ov)
        if key not in fields:
            raise ConfigError(f"unknown override key {key!r}")
        base[key] = _coerce(key, val, fields)
    if getattr(args, "seed", None) is not None:
        base["seed"] = args.seed
    return config_from_dict(base) if base else ExperimentConfig()


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate_data(args):
    from . import data as dio

    pair = dio.SyntheticDomainPair(
        family=args.family,
        image_size=args.size,
        counts=tuple(args.counts),
        seed=args.seed if args.seed is not None else 0,
    )
    out = dio.generate(pair, args.out)
    print(f"wrote dataset under {out}")
    return EXIT_OK


def cmd_encode(args):
    from . import data as dio
    from . import lne
    from .checkpoint import save_tensors

    cfg = lne.LneConfig(kernel=args.kernel, sigma=args.sigma, sigma_mode=args.sigma_mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [Path(p) for p in args.images]
    missing = [p for p in paths if not p.exists()]
    if missing:
        print(f"missing input files: {missing}", file=sys.stderr)
        return EXIT_MISSING
    for p in paths:
        img = dio.load_image(p)
        enc = lne.encode(img, cfg)
        dio.save_image(enc, out / p.name)
        if args.dump_weights:
            nw = lne.normalize_weights(lne.gaussian_weights(img, cfg), cfg.kernel)
            save_tensors(out / (p.stem + "_weights.fdcg"), {"weights": nw.weights})
    print(f"encoded {len(paths)} image(s) into {out}")
    return EXIT_OK


def cmd_freq(args):
    import numpy as np

    from . import data as dio
    from . import freqrep as fr
    from .checkpoint import save_tensors

    p = Path(args.image)
    if not p.exists():
        print(f"missing input file: {p}", file=sys.stderr)
        return EXIT_MISSING
    img = dio.to_chw(dio.load_image(p))
    fd = args.fd
    if fd == 1:
        mu, sg = fr.gauss_local_hard(img, args.kernel)
        tensors = {"mu": mu, "sigma": sg}
    elif fd == 2:
        tensors = {"hist": fr.histogram_local_hard(img, args.kernel, args.bins)}
    elif fd == 3:
        tensors = {"whist": fr.weighted_histogram_local_hard(img, args.kernel, args.bins)}
    elif fd == 4:
        tensors = {"categorical": fr.categorical_global_hard(img, args.bins)}
    else:
        tensors = {"patch_categorical": fr.categorical_patch_hard(img, args.patch, args.bins)}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_tensors(out, tensors)
    summary = {
        "variant": fd,
        "bins": args.bins,
        "kernel": args.kernel,
        "patch": args.patch,
        "tau": args.tau,
        "tensors": {k: list(np.shape(v)) for k, v in tensors.items()},
    }
    Path(str(out) + ".json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary))
    return EXIT_OK


def cmd_dist(args):
    from . import data as dio
    from . import divergence as dv
    from . import tensor as T
    from .freqrep import FreqSpec

    pa, pb = Path(args.image_a), Path(args.image_b)
    missing = [p for p in (pa, pb) if not p.exists()]
    if missing:
        print(f"missing input files: {missing}", file=sys.stderr)
        return EXIT_MISSING
    a = T.Tensor(dio.to_chw(dio.load_image(pa))[None])
    b = T.Tensor(dio.to_chw(dio.load_image(pb))[None])
    metric = dv.DistanceKind(args.metric.upper())
    specs = [FreqSpec(i, bins=args.bins, kernel=args.kernel, patch=args.patch, tau=args.tau) for i in args.fd]
    total, _ = dv.cycle_divergence_loss(a, b, a, b, specs, metric)
    value = total.item() / 2.0  # one directed pair, not both cycles
    result = {
        "metric": metric.kind,
        "value": value,
        "bits": value if metric.kind in ("KLD", "JSD") else None,
    }
    print(json.dumps(result))
    return EXIT_OK


def cmd_train(args):
    from . import data as dio
    from . import models as md
    from . import training as tr

    cfg = resolve_config(args)
    data_root = Path(args.data)
    if not data_root.exists():
        print(f"missing dataset directory: {data_root}", file=sys.stderr)
        return EXIT_MISSING
    preset = md.get_preset(args.preset, args.size)
    dataset = dio.load_dataset(data_root, preset.image_size)
    out = Path(args.out)
    state, report = tr.train_run(
        cfg,
        dataset,
        preset,
        out,
        steps=args.steps,
        checkpoint_every=args.checkpoint_every,
    )
    print(json.dumps(report["final"]))
    return EXIT_OK


def cmd_translate(args):
    from . import data as dio
    from . import training as tr

    ck = Path(args.checkpoint)
    src = Path(args.images)
    if not ck.exists() or not src.exists():
        print(f"missing checkpoint or image dir: {ck}, {src}", file=sys.stderr)
        return EXIT_MISSING
    state = tr.load_state(ck)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = sorted(src.glob("*.png")) if src.is_dir() else [src]
    for f in files:
        img = dio.load_image(f)
        if img.shape[0] != state.preset.image_size:
            img = dio.resize_bilinear(img, state.preset.image_size, state.preset.image_size)
        dio.save_image(tr.translate(state, img, args.dir), out / f.name)
    print(f"translated {len(files)} image(s) into {out}")
    return EXIT_OK


def cmd_evaluate(args):
    from . import data as dio
    from . import metrics as mt

    da, db = Path(args.dir_a), Path(args.dir_b)
    if not da.is_dir() or not db.is_dir():
        print(f"missing directory: {da} or {db}", file=sys.stderr)
        return EXIT_MISSING
    names = sorted(p.name for p in da.glob("*.png"))
    pairs = []
    rows = []
    for name in names:
        pb = db / name
        if not pb.exists():
            print(f"missing pair for {name}", file=sys.stderr)
            return EXIT_MISSING
        a, b = dio.load_image(da / name), dio.load_image(pb)
        pairs.append((a, b))
        rows.append(
            {
                "name": name,
                "psnr": mt.psnr(a, b),
                "ssim": mt.ssim(a, b),
                "f1": mt.pixel_f1(mt.ink_mask(a, args.threshold), mt.ink_mask(b, args.threshold)),
            }
        )
    report = mt.report_pairs(pairs, f1_threshold=args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    import csv as _csv

    with open(out / "per_image.csv", "w", newline="") as f:
        w = _csv.DictWriter(f, fieldnames=["name", "psnr", "ssim", "f1"])
        w.writeheader()
        w.writerows(rows)
    print(report.to_json())
    return EXIT_OK


def cmd_report(args):
    import csv as _csv
    import glob as _glob

    by_name: dict[str, dict] = {}
    for pattern in args.logs:
        matches = [Path(p) for p in sorted(_glob.glob(pattern))] or [Path(pattern)]
        for p in matches:
            if not p.exists():
                print(f"missing log file: {p}", file=sys.stderr)
                return EXIT_MISSING
            with open(p) as f:
                steps = list(_csv.DictReader(f))
            if not steps:
                continue
            name = p.parent.name
            cfg_path = p.parent / "resolved_config.json"
            if cfg_path.exists():
                name = json.loads(cfg_path.read_text()).get("name", name)
            agg = by_name.setdefault(
                name, {"runs": 0, "steps": 0, "wall_hours": 0.0, "loss_G_final": 0.0, "loss_D_final": 0.0}
            )
            agg["runs"] += 1
            agg["steps"] += len(steps)
            agg["wall_hours"] += sum(float(r["wall_ms"]) for r in steps) / 3.6e6
            agg["loss_G_final"] = float(steps[-1]["loss_G"])
            agg["loss_D_final"] = float(steps[-1]["loss_D"])
    header = ["experiment", "runs", "steps", "loss_G_final", "loss_D_final", "wall_hours"]
    print("\t".join(header))
    for name in sorted(by_name):
        r = by_name[name]
        print(
            "\t".join(
                [name, str(r["runs"]), str(r["steps"]), str(r["loss_G_final"]),
                 str(r["loss_D_final"]), str(round(r["wall_hours"], 4))]
            )
        )
    total = sum(r["wall_hours"] for r in by_name.values())
    print(f"total wall-hours\t{round(total, 4)}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freqgan", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate-data", help="write a synthetic two-domain dataset")
    g.add_argument("--family", required=True, choices=["stripes_checkers", "gradient_texture", "glyphs"])
    g.add_argument("--size", type=int, default=32)
    g.add_argument("--counts", type=int, nargs=4, default=[8, 8, 2, 2], metavar=("TRA", "TRB", "TEA", "TEB"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate_data)

    e = sub.add_parser("encode", help="neighborhood-encode PNG images")
    e.add_argument("images", nargs="+")
    e.add_argument("--kernel", type=int, default=3)
    e.add_argument("--sigma", type=float, default=0.3)
    e.add_argument("--sigma-mode", default="fixed", choices=["fixed", "per_pixel_local_std"])
    e.add_argument("--dump-weights", action="store_true")
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_encode)

    q = sub.add_parser("freq", help="dump a frequency representation of an image")
    q.add_argument("image")
    q.add_argument("--fd", type=int, required=True, choices=[1, 2, 3, 4, 5])
    q.add_argument("--bins", type=int, default=16)
    q.add_argument("--kernel", type=int, default=3)
    q.add_argument("--patch", type=int, default=8)
    q.add_argument("--tau", type=float, default=1.0)
    q.add_argument("--out", required=True)
    q.set_defaults(fn=cmd_freq)

    d = sub.add_parser("dist", help="distance between two images under an FD spec")
    d.add_argument("image_a")
    d.add_argument("image_b")
    d.add_argument("--metric", default="JSD", choices=["L1", "KLD", "JSD", "LOG", "l1", "kld", "jsd", "log"])
    d.add_argument("--fd", type=int, nargs="*", default=[4])
    d.add_argument("--bins", type=int, default=16)
    d.add_argument("--kernel", type=int, default=3)
    d.add_argument("--patch", type=int, default=8)
    d.add_argument("--tau", type=float, default=1.0)
    d.set_defaults(fn=cmd_dist)

    t = sub.add_parser("train", help="run one experiment configuration")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--experiment", help="built-in experiment name, e.g. Or, 1,4, jsd_wt")
    t.add_argument("--override", action="append", metavar="KEY=VALUE")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--preset", default="toy", choices=["paper", "toy", "toy64"])
    t.add_argument("--size", type=int)
    t.add_argument("--steps", type=int, help="override epochs with an absolute step count")
    t.add_argument("--checkpoint-every", type=int)
    t.set_defaults(fn=cmd_train)

    tl = sub.add_parser("translate", help="apply a trained generator to images")
    tl.add_argument("--checkpoint", required=True)
    tl.add_argument("--images", required=True)
    tl.add_argument("--dir", default="A2B", choices=["A2B", "B2A"])
    tl.add_argument("--out", required=True)
    tl.set_defaults(fn=cmd_translate)

    ev = sub.add_parser("evaluate", help="metric report over paired PNG directories")
    ev.add_argument("dir_a")
    ev.add_argument("dir_b")
    ev.add_argument("--threshold", type=float, default=0.0)
    ev.add_argument("--out", required=True)
    ev.set_defaults(fn=cmd_evaluate)

    r = sub.add_parser("report", help="aggregate training logs into a runtime table")
    r.add_argument("logs", nargs="+")
    r.set_defaults(fn=cmd_report)

    return ap


def main(argv=None) -> int:
    _apply_thread_cap()
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, IOError) as e:
        print(f"missing or unreadable file: {e}", file=sys.stderr)
        return EXIT_MISSING
    except ValueError as e:  # config/contract errors
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
