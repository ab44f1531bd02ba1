"""Single entry-point command line tool.

Subcommands mirror the pipeline stages: simulate -> mask -> recon /
train / infer -> eval -> compare. Every run writes a ``run.json``
echoing its fully resolved configuration, and all randomness flows from
one global seed (``--seed`` or the ``SRR_SEED`` environment variable)
expanded into recorded per-stage seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from .grid import ComplexGrid, GridError, read_grid, write_grid
from .masks import (
    MaskError,
    MaskSpec,
    SamplingMask,
    center_block_mask,
    grid_to_mask,
    mask_to_grid,
    poisson_disk_mask,
    uniform_random_mask,
)
from .metrics import MetricReport, evaluate, psnr, ssim, write_reports
from .model import (
    GanConfig,
    GeneratorConfig,
    TrainingDiverged,
    infer,
    train,
)
from .operators import ForwardModel, SensitivitySet, adjoint, equivalent_af
from .phantom import (
    PhantomSpec,
    acquire,
    build_dataset,
    downsample_sens,
    load_manifest,
    load_record,
)
from .report import comparison_figure, ensure_dir, mask_figure, metrics_figure, trace_figure
from .solver import (
    SolverConfig,
    SolverDivergence,
    kspace_interp_sr,
    lr_data_scale,
    solve_variational,
    strategy2_pipeline,
)


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        parts = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise CliError("usage", f"bad dims {text!r}, expected like 64x64")
    if len(parts) != 2 or any(p <= 0 for p in parts):
        raise CliError("usage", f"bad dims {text!r}, expected like 64x64")
    return parts


def _global_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("SRR_SEED", "0"))


def _stage_seeds(global_seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(global_seed).generate_state(n)]


def _write_run_json(out_dir: str, args, extra=None) -> None:
    ensure_dir(out_dir)
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    if extra:
        cfg.update(extra)
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2, default=str)


def _load_mask(path: str, center=(0, 0)) -> SamplingMask:
    return grid_to_mask(read_grid(path), _parse_dims(center) if isinstance(center, str) else center)


def _load_sens(path: str) -> SensitivitySet:
    return SensitivitySet(read_grid(path).data)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    seed = _global_seed(args)
    hr = _parse_dims(args.hr_dims)
    lr = _parse_dims(args.lr_dims)
    center = _parse_dims(args.center)
    pspec = PhantomSpec(
        hr_dims=hr,
        n_shapes=args.shapes,
        complex_phase=not args.no_phase,
        seed=seed,
        sigma_noise=args.sigma,
    )
    mspec = MaskSpec(dims=lr, target_af=args.af, center_size=center, seed=seed)
    ds = build_dataset(
        args.records,
        pspec,
        mspec,
        args.out,
        n_coils=args.coils,
        train_fraction=args.train_fraction,
        base_seed=seed,
    )
    _write_run_json(args.out, args, {"resolved_seed": seed})
    print(f"wrote {len(ds.records)} records to {ds.manifest_path}")
    return 0


def cmd_mask(args):
    seed = _global_seed(args)
    dims = _parse_dims(args.dims)
    center = _parse_dims(args.center)
    spec = MaskSpec(dims=dims, target_af=args.af, center_size=center, seed=seed)
    if args.kind == "poisson":
        mask = poisson_disk_mask(spec)
    elif args.kind == "uniform":
        mask = uniform_random_mask(spec)
    else:
        mask = center_block_mask(dims, center)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    ensure_dir(out_dir)
    write_grid(args.out, mask_to_grid(mask))
    mask_figure(mask.sampled, args.out + ".png", f"{args.kind} AF={mask.achieved_af:.2f}")
    _write_run_json(out_dir, args, {"resolved_seed": seed, "achieved_af": mask.achieved_af})
    print(f"mask {args.kind} dims {dims} achieved_af {mask.achieved_af:.4f} -> {args.out}")
    return 0


def cmd_recon(args):
    y = read_grid(args.input)
    mask = _load_mask(args.mask)
    sens = _load_sens(args.sens)
    model = ForwardModel(mask.sampled, mask.dims, sens.spatial_dims, sens)
    cfg = SolverConfig(
        eta=args.eta, tau=args.tau, max_iters=args.iters, prox_kind=args.prox
    )
    trace = []
    if args.method == "zerofill":
        x = adjoint(model, y.data)
    elif args.method == "pgd":
        x, trace = solve_variational(model, y.data, cfg)
    elif args.method == "ki":
        hr = _parse_dims(args.hr_dims)
        scale = lr_data_scale(model.lr_dims, hr)
        x = kspace_interp_sr(adjoint(model, y.data * scale), hr)
    elif args.method == "strategy2":
        hr = _parse_dims(args.hr_dims)
        x_lr, trace = solve_variational(model, y.data * lr_data_scale(model.lr_dims, hr), cfg)
        x = kspace_interp_sr(x_lr, hr)
    else:
        raise CliError("usage", f"unknown method {args.method!r}")
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    ensure_dir(out_dir)
    write_grid(args.out, ComplexGrid(x, domain="image"))
    if trace:
        with open(args.out + "_trace.json", "w", encoding="utf-8") as f:
            json.dump({"data_fidelity": trace}, f, indent=2)
        trace_figure(trace, args.out + "_trace.png", f"{args.method} fidelity")
    _write_run_json(out_dir, args)
    print(f"recon {args.method} -> {args.out} ({len(trace)} iterations)")
    return 0


def cmd_train(args):
    seed = _global_seed(args)
    ds = load_manifest(args.manifest)
    gen_cfg = GeneratorConfig(n_blocks=args.blocks)
    gan_cfg = GanConfig(
        lam=args.gp_lambda,
        eta_gan=args.eta_gan,
        n_disc=args.ndisc,
        lr=args.lr,
        decay=args.decay,
        epochs=args.epochs,
        max_steps=args.max_steps,
    )
    adversarial = args.adv == "on"
    _write_run_json(args.out, args, {"resolved_seed": seed})
    try:
        _, _, final, log_path = train(ds, gen_cfg, gan_cfg, adversarial, seed, args.out)
    except TrainingDiverged as e:
        raise CliError("train", f"{e}; last good checkpoint: {e.last_checkpoint}")
    print(f"trained -> {final} (log: {log_path})")
    return 0


def cmd_infer(args):
    y = read_grid(args.input)
    mask = _load_mask(args.mask)
    sens = _load_sens(args.sens)
    out = infer(args.ckpt, y, mask, sens, _parse_dims(args.hr_dims))
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    ensure_dir(out_dir)
    write_grid(args.out, out)
    _write_run_json(out_dir, args)
    print(f"infer -> {args.out}")
    return 0


def cmd_eval(args):
    ds = load_manifest(args.manifest)
    report = evaluate(ds, args.outputs, method=args.method)
    out_dir = os.path.dirname(os.path.abspath(args.report)) or "."
    ensure_dir(out_dir)
    write_reports([report], args.report)
    metrics_figure([report], args.report + ".png")
    for rec in ds.split("test"):
        truth = read_grid(rec.files["truth"]).data
        out = read_grid(os.path.join(args.outputs, rec.record_id)).data
        comparison_figure(
            truth,
            {args.method: out},
            os.path.join(out_dir, f"{rec.record_id}_compare.png"),
            rec.record_id,
        )
    _write_run_json(out_dir, args)
    agg = report.aggregates()
    print(f"eval {args.method}: n={agg['n']}", end="")
    if agg["n"]:
        print(f" psnr={agg['psnr_mean']:.3f} ssim={agg['ssim_mean']:.4f}")
    else:
        print()
    return 0


def cmd_compare(args):
    seed = _global_seed(args)
    ds = load_manifest(args.manifest)
    out_dir = ensure_dir(args.out)
    cfg = SolverConfig(eta=args.eta, tau=args.tau, max_iters=args.iters, prox_kind=args.prox)

    reports = {
        name: MetricReport(name, ds.manifest_path)
        for name in ("strategy1_pgd_hr", "strategy2_pgd_ki", "strategy3_srr")
    }
    test = ds.split("test")
    with open(ds.manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    sigma = manifest["phantom_spec"]["sigma_noise"]
    hr_center = _parse_dims(args.hr_center)

    for i, rec in enumerate(test):
        truth, sens, y, mask = load_record(rec)
        hr_dims = truth.dims

        hr_spec = MaskSpec(
            dims=hr_dims, target_af=args.hr_af, center_size=hr_center, seed=rec.seed + 7
        )
        hr_mask = poisson_disk_mask(hr_spec)
        af_hr = float(equivalent_af(hr_mask.sampled, hr_dims))
        af_lr = float(equivalent_af(mask.sampled, hr_dims))
        if abs(af_hr - af_lr) / af_lr > 0.05:
            raise CliError(
                "compare",
                f"equivalent-AF mismatch: strategy1 {af_hr:.3f} vs strategy2/3 {af_lr:.3f}",
            )

        # strategy 1: direct HR reconstruction from HR undersampled data
        y_hr = acquire(truth, sens, hr_mask, hr_dims, sigma, rec.seed + 8)
        model_hr = ForwardModel(hr_mask.sampled, hr_dims, hr_dims, sens)
        x1, _ = solve_variational(model_hr, y_hr.data, cfg)

        # strategy 2: LR reconstruction then k-space interpolation
        sens_lr = downsample_sens(sens, mask.dims)
        model_lr = ForwardModel(mask.sampled, mask.dims, mask.dims, sens_lr)
        x2 = strategy2_pipeline(model_lr, y.data, hr_dims, cfg)

        # strategy 3: direct SR-involved reconstruction
        x3 = infer(args.ckpt, y, mask, sens, hr_dims).data

        for name, x in (
            ("strategy1_pgd_hr", x1),
            ("strategy2_pgd_ki", x2),
            ("strategy3_srr", x3),
        ):
            reports[name].per_record[rec.record_id] = {
                "psnr": psnr(truth.data, x),
                "ssim": ssim(truth.data, x),
            }
        if i < args.max_figures:
            comparison_figure(
                truth.data,
                {"strategy1": x1, "strategy2": x2, "strategy3": x3},
                os.path.join(out_dir, f"{rec.record_id}_compare.png"),
                rec.record_id,
            )

    rlist = list(reports.values())
    write_reports(rlist, os.path.join(out_dir, "report"))
    metrics_figure(rlist, os.path.join(out_dir, "report.png"))
    _write_run_json(out_dir, args, {"resolved_seed": seed})
    print(f"compared {len(test)} records -> {os.path.join(out_dir, 'report.json')}")
    return 0


# ---------------------------------------------------------------------------
# dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="srrecon", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="global seed (default: $SRR_SEED or 0)")

    sp = sub.add_parser("simulate", help="generate a synthetic dataset")
    sp.add_argument("--records", type=int, default=10)
    sp.add_argument("--hr-dims", default="64x64")
    sp.add_argument("--lr-dims", default="32x32")
    sp.add_argument("--coils", type=int, default=8)
    sp.add_argument("--shapes", type=int, default=8)
    sp.add_argument("--sigma", type=float, default=0.01)
    sp.add_argument("--af", type=float, default=4.0)
    sp.add_argument("--center", default="12x12")
    sp.add_argument("--train-fraction", type=float, default=0.8)
    sp.add_argument("--no-phase", action="store_true")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("mask", help="generate an undersampling mask")
    sp.add_argument("--dims", required=True)
    sp.add_argument("--af", type=float, default=4.0)
    sp.add_argument("--center", default="12x12")
    sp.add_argument("--kind", choices=["poisson", "uniform", "center"], default="poisson")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_mask)

    sp = sub.add_parser("recon", help="classical reconstruction")
    sp.add_argument("--method", choices=["zerofill", "pgd", "ki", "strategy2"], required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--sens", required=True)
    sp.add_argument("--hr-dims", default="64x64")
    sp.add_argument("--tau", type=float, default=0.0)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--iters", type=int, default=50)
    sp.add_argument("--prox", choices=["identity", "l1", "haar"], default="haar")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_recon)

    sp = sub.add_parser("train", help="train the unrolled network")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--blocks", type=int, default=4)
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--decay", type=float, default=0.95)
    sp.add_argument("--adv", choices=["on", "off"], default="off")
    sp.add_argument("--lambda", dest="gp_lambda", type=float, default=10.0)
    sp.add_argument("--eta-gan", type=float, default=100.0)
    sp.add_argument("--ndisc", type=int, default=1)
    sp.add_argument("--max-steps", type=int, default=None)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("infer", help="reconstruct with a trained checkpoint")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--sens", required=True)
    sp.add_argument("--hr-dims", default="64x64")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("eval", help="score method outputs against ground truth")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--outputs", required=True)
    sp.add_argument("--method", default="method")
    sp.add_argument("--report", required=True)
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compare", help="run and score strategies 1/2/3")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--hr-af", type=float, default=16.0)
    sp.add_argument("--hr-center", default="12x12")
    sp.add_argument("--tau", type=float, default=0.002)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--iters", type=int, default=50)
    sp.add_argument("--prox", choices=["identity", "l1", "haar"], default="haar")
    sp.add_argument("--max-figures", type=int, default=4)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_compare)

    return p


_CATEGORY = {
    GridError: "io",
    MaskError: "mask",
    SolverDivergence: "solver",
    FileNotFoundError: "io",
    OSError: "io",
    ValueError: "runtime",
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except CliError as e:
        print(f"error: {e.category}: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # map known failures to stable categories
        cat = next((c for t, c in _CATEGORY.items() if isinstance(e, t)), "runtime")
        print(f"error: {cat}: {e}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
