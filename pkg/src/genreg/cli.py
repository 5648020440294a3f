"""Command-line harness.

Usage::

    genreg denoise --truth clean.png --out run/          # simulate, then solve
    genreg inpaint --data y.npy --mask mask.png --out run/
    genreg simulate --variant jpeg --truth clean.png --out sim/
    genreg sample-net --network run/network.npz --layer 3 --out samples.png

Parameters come from an optional flat ``key = value`` file (``--config``)
and are overridden by flags of the same name (``--lambda 30``).

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 solver breakdown.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft

from .config import APPLICATION_DEFAULTS, VARIANTS, AlgoParams, ConfigError, ModelConfig
from .convnet import derive_size_plan, sample_delta
from .core import ShapeError
from .forward import (
    ProblemSpec,
    Recipe,
    gaussian_kernel,
    load_spectrum,
    make_rng,
    save_spectrum,
    simulate_corruption,
)
from .imageio import ImageFormatError, load_image, montage, rescale, save_image
from .ipalm import SolverError, random_kernels, solve
from .metrics import format_metric, psnr, ssim
from .prox import project_kernels

log = logging.getLogger("genreg")

SUBCOMMANDS = VARIANTS + ("simulate", "sample-net")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER = 0, 2, 3, 4

TRACE_COLUMNS = ("iter", "stage", "objective", "fidelity_term", "tv_term", "l1_term", "coupling_term")


def _parse_bool(s):
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_ints(s):
    if isinstance(s, (tuple, list)):
        return tuple(int(x) for x in s)
    return tuple(int(x) for x in str(s).replace(",", " ").split())


# key -> (parser, section, field name)
KEYS = {
    "nu": (float, "model", "nu"),
    "lambda": (float, "model", "lam"),
    "gamma": (float, "model", "gamma"),
    "tv_epsilon": (float, "model", "tv_epsilon"),
    "layers": (int, "model", "n_layers"),
    "channels": (int, "model", "channels"),
    "kernel_size": (int, "model", "kernel_size"),
    "strides": (_parse_ints, "model", "strides"),
    "alg_epsilon": (float, "algo", "alg_epsilon"),
    "alpha": (float, "algo", "alpha"),
    "beta": (float, "algo", "beta"),
    "iterations": (int, "algo", "n_iter"),
    "warmup": (int, "algo", "warmup"),
    "lipschitz_init": (float, "algo", "lipschitz_init"),
    "backtrack_growth": (float, "algo", "growth"),
    "lipschitz_shrink": (float, "algo", "shrink"),
    "max_backtracks": (int, "algo", "max_backtracks"),
    "keep_fraction": (float, "recipe", "keep_fraction"),
    "noise_rel": (float, "recipe", "noise_rel"),
    "blur_half_width": (int, "recipe", "blur_half_width"),
    "blur_std": (float, "recipe", "blur_std"),
    "blur_std_relative": (_parse_bool, "recipe", "blur_std_relative"),
    "factor": (int, "recipe", "factor"),
    "quality": (int, "recipe", "quality"),
    "seed": (int, "run", "seed"),
    "deconv_init": (str, "run", "deconv_init"),
    "bits": (int, "run", "bits"),
    "peak": (float, "run", "peak"),
}


@dataclass
class RunConfig:
    subcommand: str
    model: ModelConfig
    algo: AlgoParams
    recipe: Recipe
    seed: int = 0
    deconv_init: str = "data"
    bits: int = 8
    peak: float = 1.0
    paths: dict = field(default_factory=dict)


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        values[key] = value
    return values


def parse_config(subcommand, file_values=None, overrides=None, paths=None):
    """Resolve a :class:`RunConfig` from file values and flag overrides.

    Flags win over the file; anything unset falls back to the
    defaults (per-application ``nu`` and ``lambda``).
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    sections = {"model": {}, "algo": {}, "recipe": {}, "run": {}}
    for key, raw in merged.items():
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        parser, section, name = KEYS[key]
        try:
            sections[section][name] = parser(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"cannot parse {raw!r} ({exc})") from None

    variant = (paths or {}).get("variant") or subcommand
    if variant in APPLICATION_DEFAULTS:
        for name, value in APPLICATION_DEFAULTS[variant].items():
            sections["model"].setdefault(name, value)
    m = sections["model"]
    if "n_layers" in m and "strides" not in m:
        m["strides"] = (1,) + (2,) * (m["n_layers"] - 1)
    model = ModelConfig(**m)
    algo = AlgoParams(**sections["algo"])
    recipe_variant = variant if variant in VARIANTS else "denoise"
    for name in ("keep_fraction", "blur_half_width", "blur_std", "factor", "quality", "noise_rel"):
        value = sections["recipe"].get(name)
        if value is not None and name != "noise_rel" and value <= 0:
            raise ConfigError(name, "must be > 0")
    recipe = Recipe(recipe_variant, **sections["recipe"])
    if recipe.keep_fraction > 1:
        raise ConfigError("keep_fraction", "must lie in (0, 1]")
    if recipe.noise_level() < 0:
        raise ConfigError("noise_rel", "must be >= 0")
    run = sections["run"]
    if run.get("deconv_init", "data") not in ("data", "adjoint"):
        raise ConfigError("deconv_init", "must be 'data' or 'adjoint'")
    if run.get("bits", 8) not in (8, 16):
        raise ConfigError("bits", "must be 8 or 16")
    if run.get("peak", 1.0) <= 0:
        raise ConfigError("peak", "must be > 0")
    return RunConfig(subcommand, model, algo, recipe, paths=dict(paths or {}), **run)


# --- data loading --------------------------------------------------------------


def load_data(path):
    """Observed image: ``.npy`` float arrays are loaded losslessly."""
    if str(path).lower().endswith(".npy"):
        try:
            return np.load(path)
        except (OSError, ValueError) as exc:
            raise ImageFormatError(f"{path}: cannot read array ({exc})") from exc
    return load_image(path)


def _require(path, what):
    if path is None:
        raise ConfigError(what, "missing required path")
    if not os.path.exists(path):
        raise OSError(f"{what}: file not found: {path}")
    return path


def build_problem(cfg):
    """Observed problem plus optional ground truth for `cfg`."""
    p = cfg.paths
    variant = cfg.subcommand
    truth = load_image(_require(p["truth"], "truth")) if p.get("truth") else None
    if p.get("data") is None:
        if truth is None:
            raise ConfigError("data", "give --data, or --truth to simulate the corruption")
        return simulate_corruption(truth, cfg.recipe, cfg.seed), truth
    data_path = _require(p["data"], "data")
    if variant == "jpeg":
        try:
            return ProblemSpec("jpeg", spectrum=load_spectrum(data_path)), truth
        except (KeyError, ValueError) as exc:
            raise ImageFormatError(f"{data_path}: bad spectrum file ({exc})") from exc
    y = load_data(data_path)
    if variant == "inpaint":
        mask = (load_image(_require(p.get("mask"), "mask")) > 0.5).astype(np.float64)
        return ProblemSpec("inpaint", y=mask * y, mask=mask), truth
    if variant == "deconv":
        r = cfg.recipe
        k = gaussian_kernel(r.blur_half_width, r.blur_std, r.blur_std_relative)
        return ProblemSpec("deconv", y=y, blur=k), truth
    if variant == "superres":
        return ProblemSpec("superres", y=y, factor=cfg.recipe.factor), truth
    return ProblemSpec(variant, y=y), truth


def observed_image(prob):
    """Image-domain view of the data, for previews and baseline metrics."""
    if prob.variant == "jpeg":
        return prob.spectrum.dequantize()
    if prob.variant == "superres":
        return np.repeat(np.repeat(prob.y, prob.factor, axis=0), prob.factor, axis=1)
    return prob.y


# --- artifacts -----------------------------------------------------------------


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace:
            w.writerow([
                row["iter"], row["stage"], repr(row["objective"]), repr(row["fidelity"]),
                repr(row["tv"]), repr(row["l1"]), repr(row["coupling"]),
            ])


def write_problem_files(prob, out, cfg):
    """Persist a (simulated) problem so it can be re-solved from ``--data``."""
    meta = {"variant": prob.variant, "seed": cfg.seed, "recipe": asdict(cfg.recipe)}
    if prob.variant == "jpeg":
        save_spectrum(prob.spectrum, os.path.join(out, "spectrum.qsp"))
        save_image(prob.spectrum.dequantize(), os.path.join(out, "data.png"), cfg.bits)
    else:
        np.save(os.path.join(out, "data.npy"), prob.y)
        save_image(prob.y, os.path.join(out, "data.png"), cfg.bits)
    if prob.variant == "inpaint":
        save_image(prob.mask, os.path.join(out, "mask.png"))
    if prob.variant == "deconv":
        meta["blur"] = prob.blur.tolist()
    if prob.variant == "superres":
        meta["factor"] = prob.factor
    with open(os.path.join(out, "problem.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def write_artifacts(state, prob, truth, cfg, out, wall_time):
    u = state.u
    v = state.generative()
    ranges = {}
    save_image(u, os.path.join(out, "recon.png"), cfg.bits)
    gen, ranges["generative"] = rescale(v)
    save_image(gen, os.path.join(out, "generative.png"), cfg.bits)
    resid, ranges["residual"] = rescale(u - v)
    save_image(resid, os.path.join(out, "residual.png"), cfg.bits)
    np.save(os.path.join(out, "recon.npy"), u)
    for l, theta in enumerate(state.theta, 1):
        img, ranges[f"kernels_layer{l}"] = rescale(montage(theta, pad=0))
        save_image(montage(_split(img, theta.shape), pad=1), os.path.join(out, f"kernels_layer{l}.png"))
    for l, mu in enumerate(state.mu, 1):
        img, ranges[f"latents_layer{l}"] = rescale(montage(mu, pad=0))
        save_image(montage(_split(img, mu.shape), pad=1), os.path.join(out, f"latents_layer{l}.png"))
    np.savez(
        os.path.join(out, "network.npz"),
        **{f"theta{l}": t for l, t in enumerate(state.theta, 1)},
        **{f"mu{l}": m for l, m in enumerate(state.mu, 1)},
        strides=np.array(state.plan.strides),
        image_shape=np.array(state.plan.image_shape),
    )
    write_trace(state.trace, os.path.join(out, "trace.csv"))

    report = {
        "variant": prob.variant,
        "seed": cfg.seed,
        "iterations": state.iteration,
        "final_objective": state.trace[-1]["objective"] if state.trace else None,
        "wall_time_s": wall_time,
        "psnr": None,
        "ssim": None,
        "data_psnr": None,
        "display_ranges": ranges,
        "model": asdict(cfg.model),
        "algo": asdict(cfg.algo),
    }
    if truth is not None and truth.shape == u.shape:
        report["psnr"] = format_metric(psnr(u, truth, cfg.peak))
        report["ssim"] = format_metric(ssim(u, truth, cfg.peak))
        report["data_psnr"] = format_metric(psnr(observed_image(prob), truth, cfg.peak))
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report


def _split(tiled, shape):
    """Undo an unpadded montage back into a ``(N, h, w)`` stack."""
    n, h, w = shape
    cols = int(np.ceil(np.sqrt(n)))
    return np.stack([tiled[(k // cols) * h : (k // cols + 1) * h, (k % cols) * w : (k % cols + 1) * w] for k in range(n)])


# --- subcommands ---------------------------------------------------------------


def run_application(cfg):
    out = cfg.paths["out"]
    os.makedirs(out, exist_ok=True)
    prob, truth = build_problem(cfg)
    if cfg.paths.get("data") is None:
        write_problem_files(prob, out, cfg)
    t0 = time.perf_counter()
    state = solve(prob, cfg.model, cfg.algo, seed=cfg.seed, deconv_init=cfg.deconv_init)
    wall = time.perf_counter() - t0
    report = write_artifacts(state, prob, truth, cfg, out, wall)
    log.info("done: %d iterations, objective %s, psnr %s", report["iterations"],
             report["final_objective"], report["psnr"])
    return report


def run_simulate(cfg):
    out = cfg.paths["out"]
    os.makedirs(out, exist_ok=True)
    truth = load_image(_require(cfg.paths.get("truth"), "truth"))
    prob = simulate_corruption(truth, cfg.recipe, cfg.seed)
    write_problem_files(prob, out, cfg)
    return prob


def load_network(path):
    with np.load(path) as z:
        layers = sorted(int(k[5:]) for k in z.files if k.startswith("theta"))
        theta = [z[f"theta{l}"] for l in layers]
        strides = tuple(int(s) for s in z["strides"])
        image_shape = tuple(int(s) for s in z["image_shape"])
    return theta, strides, image_shape


def run_sample_net(cfg):
    """Delta-peak samples of a learned (or freshly randomized) network."""
    p = cfg.paths
    if p.get("network"):
        theta, strides, image_shape = load_network(_require(p["network"], "network"))
        model = ModelConfig(n_layers=len(theta), channels=theta[0].shape[0],
                            kernel_size=theta[0].shape[-1], strides=strides)
    else:
        model = cfg.model
        image_shape = tuple(p.get("image_size") or (64, 64))
        rng = make_rng(cfg.seed)
        theta = project_kernels([random_kernels(rng, model.channels, model.kernel_size)
                                 for _ in range(model.n_layers)])
    plan = derive_size_plan(image_shape, model)
    layer = p.get("layer") or plan.n_layers
    shape = plan.latent_shapes[layer - 1]
    pos = tuple(p.get("position") or (shape[0] // 2, shape[1] // 2))
    channels = [p["channel"]] if p.get("channel") is not None else range(model.channels)
    samples = np.stack([sample_delta(theta, plan, layer, c, pos) for c in channels])
    out = p["out"]
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    np.save(os.path.splitext(out)[0] + ".npy", samples)
    tiles = np.stack([rescale(s)[0] for s in samples])
    save_image(montage(tiles), out)
    return samples


# --- argument parsing ------------------------------------------------------------


def _add_param_flags(p):
    g = p.add_argument_group("parameters (override --config)")
    for key, (parser, _, _) in KEYS.items():
        flag = "--" + key.replace("_", "-")
        kwargs = {"dest": "param_" + key, "default": None, "metavar": key.upper()}
        if parser is _parse_ints:
            kwargs["type"] = str
        g.add_argument(flag, **kwargs)


def build_parser():
    parser = argparse.ArgumentParser(prog="genreg", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in VARIANTS:
        p = sub.add_parser(name, help=f"solve a {name} problem")
        p.add_argument("--config", help="flat key = value parameter file")
        p.add_argument("--data", help="observed data (.npy/.png/.pgm; spectrum file for jpeg)")
        p.add_argument("--truth", help="ground truth image; simulates data when --data is absent")
        p.add_argument("--mask", help="inpainting mask image (nonzero = known)")
        p.add_argument("--out", required=True, help="output directory")
        _add_param_flags(p)
    p = sub.add_parser("simulate", help="write corrupted data for a ground-truth image")
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--config")
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    _add_param_flags(p)
    p = sub.add_parser("sample-net", help="delta-peak samples of a network")
    p.add_argument("--config")
    p.add_argument("--network", help="network.npz written by an application run")
    p.add_argument("--layer", type=int, help="1-based latent layer (default: deepest)")
    p.add_argument("--channel", type=int, help="0-based channel (default: all channels)")
    p.add_argument("--position", type=int, nargs=2, metavar=("I", "J"))
    p.add_argument("--image-size", type=int, nargs=2, metavar=("NX", "NY"))
    p.add_argument("--out", required=True, help="output PNG (an .npy with raw samples is written alongside)")
    _add_param_flags(p)
    return parser


def config_from_args(args):
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {k[len("param_"):]: v for k, v in vars(args).items() if k.startswith("param_")}
    paths = {k: v for k, v in vars(args).items()
             if not k.startswith("param_") and k not in ("config", "command", "verbose")}
    return parse_config(args.command, file_values, overrides, paths)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    threads = int(os.environ.get("GENREG_THREADS", "1") or 1)
    try:
        cfg = config_from_args(args)
        with scipy.fft.set_workers(max(threads, 1)):
            if args.command == "simulate":
                run_simulate(cfg)
            elif args.command == "sample-net":
                run_sample_net(cfg)
            else:
                run_application(cfg)
    except (ConfigError, ShapeError) as exc:
        print(f"genreg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ImageFormatError) as exc:
        print(f"genreg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"genreg: solver breakdown: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
