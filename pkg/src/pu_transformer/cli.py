"""Command-line entry point: ``pu-transformer <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 usage error.  Logs go to stderr,
data and reports to stdout or ``--out``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .data import generate_dataset, load_checkpoint, read_xyz, write_dataset, write_xyz
from .metrics import evaluate
from .model import ModelConfig, param_count
from .surfaces import DEFAULT_ZOO, parse_surface

log = logging.getLogger("pu_transformer")

REFERENCE_PARAMS = 969_900  # L=5 reference model size
REFERENCE_BY_L = {3: 438_300, 4: 547_300, 5: 969_900, 6: 2_634_400}


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x)


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x]


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--channels", type=_ints, default=None, help="encoder widths, e.g. 32,64,128,256,256")
    p.add_argument("--encoders", type=int, default=None, help="use the default widths for L encoders")
    p.add_argument("--head-channels", type=int, default=16)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--psi", type=int, default=4)
    p.add_argument("--ratio", type=int, default=4)
    p.add_argument("--precision", choices=["float32", "float64"], default="float32")
    p.add_argument("--attn-scale", action="store_true", help="divide attention logits by sqrt(w)")


def _model_config(a) -> ModelConfig:
    kw = dict(head_channels=a.head_channels, k=a.k, psi=a.psi, r=a.ratio, dtype=a.precision,
              attn_scale=a.attn_scale)
    if a.encoders is not None:
        return ModelConfig.with_encoders(a.encoders, **kw)
    if a.channels:
        kw["channels"] = a.channels
    return ModelConfig(**kw)


def cmd_generate(a) -> int:
    shapes = [s for s in a.shapes.split(";" if ";" in a.shapes else " ") if s] if a.shapes else list(DEFAULT_ZOO)
    if len(shapes) == 1 and ":" not in shapes[0]:
        shapes = [s for s in shapes[0].split(",") if s]
    surfaces = [parse_surface(s) for s in shapes]
    records = generate_dataset(surfaces, a.n_in, a.ratio, a.count, a.seed)
    manifest = write_dataset(records, a.out)
    print(f"wrote {len(records)} samples ({a.n_in} -> {a.n_in * a.ratio} points) to {manifest}")
    return 0


def cmd_train(a) -> int:
    from .train import PRESETS, TrainConfig, train_from_dataset

    kw = dict(PRESETS[a.preset])
    for key in ("epochs", "batch_size", "lr0", "lr_decay", "decay_interval", "optimizer", "max_steps"):
        v = getattr(a, key)
        if v is not None:
            kw[key] = v
    tcfg = TrainConfig(seed=a.seed, dataset=a.dataset, checkpoint=a.ckpt, **kw)
    cfg = _model_config(a)
    manifest_path = a.manifest or f"{a.ckpt}.manifest.json"
    _, manifest = train_from_dataset(a.dataset, cfg, tcfg, checkpoint=a.ckpt, manifest_path=manifest_path)
    print(f"trained {manifest.steps} steps, final loss {manifest.losses[-1]:.6g}, "
          f"checkpoint {a.ckpt} ({manifest.checkpoint_hash[:12]})")
    return 0


def cmd_upsample(a) -> int:
    from .pipeline import upsample_cloud

    params, cfg = load_checkpoint(a.ckpt)
    if a.ratio is not None and a.ratio != cfg.r:
        raise ValueError(f"--ratio {a.ratio} does not match checkpoint ratio {cfg.r}")
    pts = read_xyz(a.input)
    dense = upsample_cloud(pts, params, cfg, a.patch_size, a.coverage)
    write_xyz(dense, a.out)
    log.info("upsampled %d -> %d points", len(pts), len(dense))
    return 0


def cmd_evaluate(a) -> int:
    surface = parse_surface(a.surface) if a.surface else None
    report = evaluate(read_xyz(a.pred), read_xyz(a.gt), surface)
    _emit(report.to_kv() if a.format == "kv" else report.to_line() + "\n", a.out)
    return 1 if report.has_nan() else 0


def cmd_noise_sweep(a) -> int:
    from .pipeline import format_noise_table, noise_sweep

    params, cfg = load_checkpoint(a.ckpt)
    surface = parse_surface(a.surface) if a.surface else None
    seeds = [a.seed + i for i in range(a.repeats)]
    rows = noise_sweep(read_xyz(a.input), read_xyz(a.gt), params, cfg, a.betas, surface, seeds, a.patch_size)
    _emit(format_noise_table(rows), a.out)
    return 0


def cmd_gradcheck(a) -> int:
    from .checks import gradcheck_suite

    report, blocks = gradcheck_suite(seed=a.seed, h=a.h, tol=a.tol)
    for name, err in blocks.items():
        print(f"{name:<16} max_rel_err={err:.3e} {'ok' if err < a.tol else 'FAIL'}")
    if not report.passed:
        print("failing tensors: " + ", ".join(report.failures))
        return 1
    print(f"all blocks < {a.tol:g}")
    return 0


def cmd_params(a) -> int:
    cfg = _model_config(a)
    total, blocks = param_count(cfg, by_block=True)
    lines = [f"{name:<16} {n:>10,d}" for name, n in blocks.items()]
    lines.append(f"{'total':<16} {total:>10,d}")
    if cfg == ModelConfig(dtype=cfg.dtype, attn_scale=cfg.attn_scale):
        delta = 100.0 * (total - REFERENCE_PARAMS) / REFERENCE_PARAMS
        lines.append(f"delta vs reference 969.9k: {delta:+.2f}%")
    if a.sweep:
        lines.append("encoders  ours        reference")
        for L in sorted(REFERENCE_BY_L):
            n = param_count(ModelConfig.with_encoders(L, head_channels=cfg.head_channels, k=cfg.k,
                                                      psi=cfg.psi, r=cfg.r))
            lines.append(f"L={L:<7} {n / 1e3:>8.1f}k  {REFERENCE_BY_L[L] / 1e3:>8.1f}k")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pu-transformer", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--shapes", default=None,
                   help="comma list of shape kinds, or ';'-separated full specs (default: the whole zoo)")
    p.add_argument("--n-in", type=int, default=256)
    p.add_argument("--ratio", type=int, default=4)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train on a generated dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", dest="lr0", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--decay-interval", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--max-steps", type=int)
    p.add_argument("--seed", type=int, default=0)
    _model_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("upsample", help="upsample an .xyz cloud with the seed-patch protocol")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ratio", type=int, default=None)
    p.add_argument("--patch-size", type=int, default=256)
    p.add_argument("--coverage", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("evaluate", help="CD / HD / P2F of a prediction")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--surface", default=None, help="reference surface spec, e.g. sphere:radius=1")
    p.add_argument("--format", choices=["line", "kv"], default="line")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("noise-sweep", help="metrics under Gaussian input noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--surface", default=None)
    p.add_argument("--betas", type=_floats, default=[0.0, 0.005, 0.01, 0.02])
    p.add_argument("--repeats", type=int, default=1, help="noise draws per level (seeds seed..seed+n-1)")
    p.add_argument("--patch-size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of a tiny float64 model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="parameter counts per block")
    _model_args(p)
    p.add_argument("--sweep", action="store_true", help="also list totals for L=3..6")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except Exception as exc:  # noqa: BLE001
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
