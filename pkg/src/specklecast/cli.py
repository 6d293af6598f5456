"""Command-line interface.

Subcommands: simulate, invert, ablate, sweep-luminance, sweep-geometry,
gen, icsr-check, eval.  Global flags ``--config FILE --seed N --out
DIR``; the config file is a sectioned key-value file with ``[optics]``,
``[scheme]``, ``[scene]`` and ``[report]`` sections, any of which may
be omitted.  Scheme flags given on the command line override the file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, icsr
from .grids import child_rng
from .invert import SCHEMES, SchemeConfig, run_inversion
from .io import load_tensor, read_config, save_png, save_tensor, write_config
from .metrics import psnr, rmse, ssim
from .optics import OpticsConfig, apply_transfer
from .scenegen import CATEGORIES, SceneSpec, generate, make_split


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specklecast",
        description="Optical projection side-channel simulator and inverter.",
    )
    parser.add_argument("--config", default=None, help="sectioned key-value config file")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="render a scene and push it through the channel")
    sim.add_argument("--in", dest="input", default=None, help="input screen tensor (.irr4)")

    inv = sub.add_parser("invert", help="invert an observation tensor")
    inv.add_argument("--obs", required=True, help="observation tensor (.irr4)")
    inv.add_argument("--truth", default=None, help="optional ground-truth tensor for metrics")
    _add_scheme_flags(inv)
    inv.add_argument("--psi-psf-sigma", type=float, default=None,
                     help="override the PSF width the approximate inverse assumes")

    abl = sub.add_parser("ablate", help="run the four-scheme ablation")
    _add_scheme_flags(abl)

    lum = sub.add_parser("sweep-luminance", help="brightness-offset sweep")
    _add_scheme_flags(lum)

    geo = sub.add_parser("sweep-geometry", help="pose and distance sweep")
    _add_scheme_flags(geo)

    gen = sub.add_parser("gen", help="generate a scene corpus")
    gen.add_argument("--category", choices=CATEGORIES, default=None,
                     help="single category (default: all four)")
    gen.add_argument("--count", type=int, default=20)
    gen.add_argument("--size", type=int, default=64)

    chk = sub.add_parser("icsr-check", help="analytic-vs-numeric loss gradient check")
    chk.add_argument("--trials", type=int, default=50)

    ev = sub.add_parser("eval", help="metrics between two tensors")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--recon", required=True)
    return parser


def _add_scheme_flags(sub) -> None:
    sub.add_argument("--scheme", choices=SCHEMES, default=None)
    sub.add_argument("--eta", type=float, default=None)
    sub.add_argument("--beta", type=float, default=None)
    sub.add_argument("--rho", type=float, default=None)
    sub.add_argument("--lambda", dest="reg_lambda", type=float, default=None)
    sub.add_argument("--gamma", dest="gate_gamma", type=float, default=None)
    sub.add_argument("--iters", type=int, default=None)
    sub.add_argument("--tol", type=float, default=None)


def _load_sections(args) -> dict:
    if args.config is None:
        return {}
    return read_config(args.config)


def _optics_from(sections: dict, default: OpticsConfig) -> OpticsConfig:
    if "optics" in sections:
        return OpticsConfig.from_mapping(sections["optics"])
    return default


def _scheme_from(sections: dict, args, default: SchemeConfig) -> SchemeConfig:
    cfg = default
    mapping = sections.get("scheme", {})
    casts = {
        "scheme": str, "eta": float, "beta": float, "rho": float,
        "reg_lambda": float, "gate_gamma": float, "max_iters": int,
        "tol": float, "reg_eps": float, "cg_iters": int,
    }
    updates = {}
    for key, raw in mapping.items():
        if key not in casts:
            raise ValueError(f"scheme config: unknown key {key!r}")
        updates[key] = casts[key](raw)
    cfg = replace(cfg, **updates)
    overrides = {
        "scheme": args.scheme, "eta": args.eta, "beta": args.beta, "rho": args.rho,
        "reg_lambda": args.reg_lambda, "gate_gamma": args.gate_gamma,
        "max_iters": args.iters, "tol": args.tol,
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


def _scene_params(sections: dict) -> dict:
    scene = sections.get("scene", {})
    size = int(scene.get("size", 64))
    return {
        "count": int(scene.get("count", 20)),
        "size": (size, size),
        "categories": tuple(
            c.strip() for c in scene.get("categories", ",".join(CATEGORIES)).split(",")
        ),
        "category": scene.get("sweep_category", "screen"),
    }


def _snapshot(out_dir: Path, args, sections: dict) -> None:
    """Record the effective config so runs are reproducible from disk."""
    sections = dict(sections)
    sections.setdefault("run", {})
    sections["run"] = dict(sections["run"], seed=str(args.seed), command=args.command)
    write_config(out_dir / "run_config.ini", sections)


def _cmd_simulate(args, sections) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    optics = _optics_from(sections, OpticsConfig())
    scene = _scene_params(sections)
    if args.input:
        screen = load_tensor(args.input)
    else:
        spec = SceneSpec(category=scene["category"], size=scene["size"], seed=args.seed)
        screen = generate(spec).image
    rng = child_rng(args.seed, 7, 0) if optics.noise_sigma > 0 else None
    obs = apply_transfer(screen, optics, rng)
    save_tensor(out / "screen.irr4", screen)
    save_tensor(out / "observation.irr4", obs)
    save_png(out / "screen.png", screen)
    save_png(out / "observation.png", np.clip(obs, 0.0, 1.0))
    _snapshot(out, args, sections)
    print(f"wrote {out / 'screen.irr4'} and {out / 'observation.irr4'}")
    return 0


def _cmd_invert(args, sections) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    optics = _optics_from(sections, OpticsConfig())
    scheme = _scheme_from(sections, args, SchemeConfig())
    obs = load_tensor(args.obs)
    if args.psi_psf_sigma is not None:
        scheme = replace(scheme, psi_psf_sigma=args.psi_psf_sigma)
    result = run_inversion(obs, optics, scheme)
    recon = np.clip(result.final_estimate, 0.0, 1.0)
    save_tensor(out / "reconstruction.irr4", result.final_estimate)
    save_png(out / "reconstruction.png", recon)
    with open(out / "residuals.csv", "w") as fh:
        fh.write("iter,residual\n")
        for i, r in enumerate(result.residual_history, start=1):
            fh.write(f"{i},{r:.12e}\n")
    print(f"iterations={result.iterations_run} converged={result.converged} "
          f"final_residual={result.residual_history[-1]:.3e}")
    if args.truth:
        truth = load_tensor(args.truth)
        print(f"psnr={psnr(truth, recon):.3f} rmse={rmse(truth, recon):.3f} "
              f"ssim={ssim(truth, recon):.4f}")
    _snapshot(out, args, sections)
    return 0


def _run_protocol(args, sections, protocol: str) -> int:
    out = Path(args.out)
    scene = _scene_params(sections)
    corpus = harness.build_corpus(
        scene["count"], scene["size"], args.seed, scene["categories"]
    )
    if protocol == "ablate":
        optics = _optics_from(sections, harness.ABLATION_OPTICS)
        scheme = _scheme_from(sections, args, SchemeConfig(tol=1e-4, max_iters=500))
        report = harness.run_ablation(corpus, optics, scheme_config=scheme, seed=args.seed)
    elif protocol == "sweep-luminance":
        optics = _optics_from(sections, harness.ABLATION_OPTICS)
        scheme = _scheme_from(
            sections, args, SchemeConfig(scheme="prirr", tol=1e-4, max_iters=500)
        )
        report = harness.run_luminance_sweep(
            corpus, optics, scheme, category=scene["category"], seed=args.seed
        )
    else:
        optics = _optics_from(sections, harness.GEOMETRY_OPTICS)
        scheme = _scheme_from(
            sections, args, SchemeConfig(scheme="prirr", tol=1e-6, max_iters=500)
        )
        report = harness.run_geometry_sweep(
            corpus, optics, scheme, category=scene["category"], seed=args.seed
        )
    harness.write_report(report, out)
    _snapshot(out, args, sections)
    for row in report.rows:
        print(f"{row.condition}: psnr={row.psnr:.3f} rmse={row.rmse:.3f} ssim={row.ssim:.4f}")
    print(f"report written to {report.csv_path}")
    return 0


def _cmd_gen(args, sections) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    categories = (args.category,) if args.category else CATEGORIES
    split = make_split(args.count, args.seed)
    split_of = {}
    for name, indices in (("train", split.train), ("val", split.val), ("test", split.test)):
        for i in indices:
            split_of[i] = name
    lines = []
    for category in categories:
        for i in range(args.count):
            seed = args.seed * 100003 + i
            scene = generate(SceneSpec(category=category, size=(args.size, args.size), seed=seed))
            stem = f"{category}_{i:04d}"
            save_tensor(out / f"{stem}.irr4", scene.image)
            save_png(out / f"{stem}.png", scene.image)
            lines.append(f"{i},{category},{seed},{split_of[i]}")
    (out / "manifest.csv").write_text("index,category,seed,split\n" + "\n".join(lines) + "\n")
    _snapshot(out, args, sections)
    print(f"wrote {len(lines)} scenes to {out}")
    return 0


def _cmd_icsr_check(args, sections) -> int:
    max_err = icsr_gradient_check(seed=args.seed, trials=args.trials)
    print(f"max relative gradient error over {args.trials} trials: {max_err:.3e}")
    return 0 if max_err <= 1e-5 else 1


def icsr_gradient_check(seed: int = 0, trials: int = 50, h: float = 1e-6) -> float:
    """Analytic batch-loss gradient vs central differences, worst case."""
    worst = 0.0
    for t in range(trials):
        rng = child_rng(seed, 11, t)
        c, hh, ww, d = 2, 2, 2, 4
        vp = rng.standard_normal((c, hh, ww, d))
        vr = rng.standard_normal((c, hh, ww, d))
        p = icsr.SemanticEmbedding(vp)
        r = icsr.SemanticEmbedding(vr)
        cfg = icsr.LossConfig(
            eps=1e-8,
            alpha=float(rng.choice([1.0, 2.0, 3.0])),
            lam=float(rng.uniform(0.0, 0.5)),
            theta=rng.standard_normal(3),
        )
        channel = int(rng.integers(0, c))
        positions = [
            (int(rng.integers(0, ww)), int(rng.integers(0, hh))) for _ in range(3)
        ]
        grad, grad_theta = icsr.batch_loss_gradient(p, r, cfg, positions, channel)
        for x, y in set(positions):
            for i in range(d):
                vp_plus = vp.copy()
                vp_plus[channel, y, x, i] += h
                vp_minus = vp.copy()
                vp_minus[channel, y, x, i] -= h
                num = (
                    icsr.batch_loss(icsr.SemanticEmbedding(vp_plus), r, cfg, positions, channel)
                    - icsr.batch_loss(icsr.SemanticEmbedding(vp_minus), r, cfg, positions, channel)
                ) / (2 * h)
                ana = grad[channel, y, x, i]
                scale = max(abs(num), abs(ana), 1e-8)
                worst = max(worst, abs(num - ana) / scale)
        num_theta = 2.0 * cfg.lam * cfg.theta
        if cfg.theta.size:
            scale = max(float(np.max(np.abs(num_theta))), 1e-8)
            worst = max(worst, float(np.max(np.abs(grad_theta - num_theta))) / scale)
    return worst


def _cmd_eval(args, sections) -> int:
    truth = load_tensor(args.truth)
    recon = load_tensor(args.recon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    p, r, s = psnr(truth, recon), rmse(truth, recon), ssim(truth, recon)
    with open(out / "report.csv", "w") as fh:
        fh.write("condition,psnr,rmse,ssim\n")
        fh.write(f"eval,{p:.6f},{r:.6f},{s:.6f}\n")
    print(f"psnr={p:.3f} rmse={r:.3f} ssim={s:.4f}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    sections = _load_sections(args)
    if args.command == "simulate":
        return _cmd_simulate(args, sections)
    if args.command == "invert":
        return _cmd_invert(args, sections)
    if args.command in ("ablate",):
        return _run_protocol(args, sections, "ablate")
    if args.command == "sweep-luminance":
        return _run_protocol(args, sections, "sweep-luminance")
    if args.command == "sweep-geometry":
        return _run_protocol(args, sections, "sweep-geometry")
    if args.command == "gen":
        return _cmd_gen(args, sections)
    if args.command == "icsr-check":
        return _cmd_icsr_check(args, sections)
    if args.command == "eval":
        return _cmd_eval(args, sections)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
