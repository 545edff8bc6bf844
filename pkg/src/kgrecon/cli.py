"""Command-line interface: mask, simulate, reconstruct, evaluate.

Every command is reproducible byte-for-byte given identical inputs, flags,
and seed. Options may come from a ``key=value`` config file (``#`` comments);
explicit flags win over config values, which win over defaults. Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np

from .data_io import read_fastmri_volume, save_png, shepp_logan
from .diffusion import build_schedule, default_schedule
from .errors import FormatError, NumericalError
from .guidance import consistency_residual
from .kspace import (
    apply_mask,
    default_center_fraction,
    fft2c,
    ifft2c,
    make_mask,
    read_complex,
    read_mask,
    write_complex,
    write_mask,
    zero_fill,
)
from .metrics import psnr, ssim
from .oracle import GaussianPrior, gaussian_denoiser
from .sampling import ReconstructionConfig, coarse_to_fine_sample

RESIDUAL_LIMIT = 1e-5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# name -> (cast, default); None defaults are resolved per command.
_SETTINGS = {
    "height": (int, 320),
    "width": (int, 320),
    "acceleration": (float, 4.0),
    "center_fraction": (float, None),
    "seed": (int, 0),
    "threads": (int, 1),
    "out_dir": (str, "."),
    "steps": (int, 4000),
    "beta_min": (float, None),
    "beta_max": (float, None),
    "stride": (int, 40),
    "num_samples": (int, 4),
    "refine_steps": (int, 200),
    "tc_repeats": (int, 3),
    "denoiser": (str, "oracle"),
    "prior_mean": (str, "0"),
    "prior_std": (float, 1.0),
    "weights": (str, None),
    "backbone_scale": (float, 1.2),
    "skip_scale": (float, 0.9),
    "radius": (float, 1.0),
    "mod_blocks": (str, "0,1"),
    "slice": (int, 0),
    "af": (float, None),
    "figure": (lambda v: v.strip().lower() not in ("0", "false", "no"), True),
}


def load_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in _SETTINGS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


class Settings:
    """Flag > config > default resolution for one parsed command."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = load_config(args.config) if getattr(args, "config", None) else {}

    def get(self, name: str):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        cast, default = _SETTINGS[name]
        if name in self.config:
            raw = self.config[name]
            try:
                return cast(raw)
            except ValueError as exc:
                raise UsageError(f"config key {name}={raw!r}: {exc}") from exc
        return default

    def out_dir(self) -> Path:
        out = Path(self.get("out_dir"))
        out.mkdir(parents=True, exist_ok=True)
        return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")
    p.add_argument("--threads", type=int, help="worker threads for parallel chains")


def build_parser() -> _Parser:
    parser = _Parser(prog="kgrecon", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("mask", help="generate an undersampling mask")
    _add_common(p)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--acceleration", type=float)
    p.add_argument("--center-fraction", dest="center_fraction", type=float)
    p.add_argument("--out", help="mask filename (default <out-dir>/mask.mask)")

    p = sub.add_parser("simulate", help="produce an undersampled observation")
    _add_common(p)
    p.add_argument("--input", help="FastMRI HDF5 file (default: built-in phantom)")
    p.add_argument("--slice", type=int, help="slice index within --input")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--acceleration", type=float)
    p.add_argument("--center-fraction", dest="center_fraction", type=float)
    p.add_argument("--mask", help="reuse an existing mask file instead of generating")

    p = sub.add_parser("reconstruct", help="run the sampling pipeline")
    _add_common(p)
    p.add_argument("--observation", required=True, help="undersampled k-space (CPLX)")
    p.add_argument("--mask", required=True, help="sampling mask (MASK)")
    p.add_argument("--steps", type=int, help="diffusion steps T (default 4000)")
    p.add_argument("--beta-min", dest="beta_min", type=float)
    p.add_argument("--beta-max", dest="beta_max", type=float)
    p.add_argument("--stride", type=int, help="coarse schedule stride k (default 40)")
    p.add_argument("--num-samples", dest="num_samples", type=int, help="parallel chains N")
    p.add_argument("--refine-steps", dest="refine_steps", type=int, help="refinement depth")
    p.add_argument("--tc-repeats", dest="tc_repeats", type=int,
                   help="texture-coordination repeats K per step")
    p.add_argument("--denoiser", choices=("oracle", "weights"))
    p.add_argument("--prior-mean", dest="prior_mean",
                   help="oracle prior mean: a constant or a CPLX file")
    p.add_argument("--prior-std", dest="prior_std", type=float)
    p.add_argument("--weights", help="MFUW weight file for the network denoiser")
    p.add_argument("--backbone-scale", dest="backbone_scale", type=float)
    p.add_argument("--skip-scale", dest="skip_scale", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--mod-blocks", dest="mod_blocks",
                   help="comma-separated decoder blocks to modulate")

    p = sub.add_parser("evaluate", help="compute PSNR/SSIM for reference/recon pairs")
    _add_common(p)
    p.add_argument("pairs", nargs="+", metavar="FILE",
                   help="alternating reference/reconstruction CPLX files")
    p.add_argument("--af", type=float, help="acceleration factor recorded in the CSV")
    p.add_argument("--out", help="CSV path (default <out-dir>/metrics.csv)")
    p.add_argument("--no-figure", dest="figure", action="store_false", default=None,
                   help="skip the metrics figure")

    return parser


def _new_figure(width: float, height: float):
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    fig = Figure(figsize=(width, height), dpi=120)
    FigureCanvasAgg(fig)
    return fig


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def cmd_mask(settings: Settings) -> int:
    h, w = settings.get("height"), settings.get("width")
    af = settings.get("acceleration")
    cf = settings.get("center_fraction")
    if cf is None:
        cf = default_center_fraction(af)
    m = make_mask(h, w, af, cf, settings.get("seed"))
    out_dir = settings.out_dir()
    out = Path(settings.args.out) if settings.args.out else out_dir / "mask.mask"
    write_mask(out, m)
    save_png(out.with_suffix(".png"), m.as_array())
    print(f"mask {h}x{w} AF={af:g} center_fraction={cf:g} -> {out}")
    print(f"sampled fraction: {m.sampled_fraction:.4f} (target {1.0 / af:.4f})")
    return 0


def _load_source(settings: Settings) -> tuple[np.ndarray, np.ndarray]:
    """Return (ground-truth complex image, reference magnitude)."""
    if settings.args.input:
        grids, references = read_fastmri_volume(settings.args.input)
        index = settings.get("slice")
        if not (0 <= index < grids.shape[0]):
            raise UsageError(f"slice {index} out of range for {grids.shape[0]} slices")
        return ifft2c(grids[index]), references[index]
    phantom = shepp_logan(settings.get("height"), settings.get("width"))
    return phantom.astype(np.complex128), phantom


def cmd_simulate(settings: Settings) -> int:
    truth, reference = _load_source(settings)
    h, w = truth.shape
    if settings.args.mask:
        m = read_mask(settings.args.mask)
        if m.shape != truth.shape:
            raise UsageError(f"mask shape {m.shape} != image shape {truth.shape}")
    else:
        af = settings.get("acceleration")
        cf = settings.get("center_fraction")
        if cf is None:
            cf = default_center_fraction(af)
        m = make_mask(h, w, af, cf, settings.get("seed"))

    x_obs = apply_mask(fft2c(truth), m)
    zf = zero_fill(x_obs)
    peak = float(reference.max())
    zf_psnr = psnr(reference, np.abs(zf), peak) if peak > 0 else math.inf

    out_dir = settings.out_dir()
    write_complex(out_dir / "x_obs.cplx", x_obs)
    write_complex(out_dir / "ground_truth.cplx", truth)
    write_mask(out_dir / "mask.mask", m)
    save_png(out_dir / "ground_truth.png", reference)
    save_png(out_dir / "zero_fill.png", np.abs(zf))
    print(f"observation {h}x{w}, sampled fraction {m.sampled_fraction:.4f} -> {out_dir}")
    print(f"zero-fill PSNR: {_fmt(zf_psnr)} dB")
    return 0


def _make_denoiser(settings: Settings, x_obs: np.ndarray, schedule):
    kind = settings.get("denoiser")
    if kind == "oracle":
        raw = settings.get("prior_mean")
        try:
            mean = np.full(x_obs.shape, float(raw), dtype=np.complex128)
        except ValueError:
            mean = read_complex(raw)
            if mean.shape != x_obs.shape:
                raise UsageError(
                    f"prior mean shape {mean.shape} != observation shape {x_obs.shape}"
                ) from None
        prior = GaussianPrior.from_complex(mean, settings.get("prior_std"))
        return gaussian_denoiser(prior, schedule), f"oracle(prior_std={settings.get('prior_std'):g})"
    if kind == "weights":
        path = settings.get("weights")
        if not path:
            raise UsageError("--weights is required with --denoiser weights")
        from .modulation import ModulationConfig
        from .unet import UNetDenoiser, load_model

        try:
            blocks = tuple(int(b) for b in settings.get("mod_blocks").split(",") if b.strip())
        except ValueError as exc:
            raise UsageError(f"bad --mod-blocks value: {exc}") from exc
        cfg = ModulationConfig(
            backbone_scale=settings.get("backbone_scale"),
            skip_scale=settings.get("skip_scale"),
            radius=settings.get("radius"),
            blocks=blocks,
        )
        return UNetDenoiser(load_model(path, cfg)), f"weights({path})"
    raise UsageError(f"unknown denoiser {kind!r}")


def _reconstruction_report(path, zf_mag, recon_mag, residual_map) -> None:
    fig = _new_figure(10.5, 3.4)
    axes = fig.subplots(1, 3)
    for ax, img, title in (
        (axes[0], zf_mag, "zero-filled"),
        (axes[1], recon_mag, "reconstruction"),
        (axes[2], residual_map, "k-space residual (log10)"),
    ):
        im = ax.imshow(img, cmap="gray" if title != "k-space residual (log10)" else "magma")
        ax.set_title(title, fontsize=9)
        ax.axis("off")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path)


def cmd_reconstruct(settings: Settings) -> int:
    x_obs = read_complex(settings.args.observation)
    m = read_mask(settings.args.mask)
    if x_obs.shape != m.shape:
        raise UsageError(f"observation shape {x_obs.shape} != mask shape {m.shape}")

    T = settings.get("steps")
    beta_min, beta_max = settings.get("beta_min"), settings.get("beta_max")
    if beta_min is None and beta_max is None:
        schedule = default_schedule(T)
    else:
        scale = 1000.0 / T
        schedule = build_schedule(
            T,
            beta_min if beta_min is not None else 1e-4 * scale,
            beta_max if beta_max is not None else 0.02 * scale,
        )

    cfg = ReconstructionConfig(
        stride=settings.get("stride"),
        num_samples=settings.get("num_samples"),
        refine_steps=settings.get("refine_steps"),
        tc_repeats=settings.get("tc_repeats"),
        seed=settings.get("seed"),
    )
    denoiser, denoiser_desc = _make_denoiser(settings, x_obs, schedule)

    timings: dict[str, float] = {}
    start = time.perf_counter()
    y0 = coarse_to_fine_sample(
        denoiser, x_obs, m, cfg, schedule, threads=settings.get("threads"), timings=timings
    )
    total = time.perf_counter() - start

    residual = consistency_residual(y0, x_obs, m)
    limit = RESIDUAL_LIMIT * float(np.abs(x_obs).max())

    out_dir = settings.out_dir()
    write_complex(out_dir / "recon.cplx", y0)
    save_png(out_dir / "recon.png", np.abs(y0))
    zf_mag = np.abs(zero_fill(x_obs))
    residual_map = np.log10(np.abs((fft2c(y0) - x_obs) * m.as_array()) + 1e-12)
    _reconstruction_report(out_dir / "report.png", zf_mag, np.abs(y0), residual_map)

    lines = [
        f"observation: {settings.args.observation} ({x_obs.shape[0]}x{x_obs.shape[1]})",
        f"mask: {settings.args.mask} (AF={m.acceleration:g}, "
        f"sampled fraction {m.sampled_fraction:.4f})",
        f"schedule: T={schedule.T}, beta=[{schedule.beta[0]:.3e}, {schedule.beta[-1]:.3e}]",
        f"sampler: stride={cfg.stride} num_samples={cfg.num_samples} "
        f"refine_steps={cfg.refine_steps} tc_repeats={cfg.tc_repeats} seed={cfg.seed}",
        f"denoiser: {denoiser_desc}",
        f"coarse phase: {timings.get('coarse_s', 0.0):.3f} s",
        f"refinement: {timings.get('refine_s', 0.0):.3f} s",
        f"total: {total:.3f} s",
        f"consistency residual: {residual:.3e} (limit {limit:.3e})",
    ]
    (out_dir / "reconstruct.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    if residual > limit:
        raise NumericalError(
            f"data-consistency residual {residual:.3e} exceeds limit {limit:.3e}"
        )
    return 0


def _metrics_figure(path, rows) -> None:
    fig = _new_figure(6.4, 4.2)
    ax_psnr, ax_ssim = fig.subplots(2, 1, sharex=True)
    slices = [r["slice"] for r in rows]
    finite_psnr = [min(r["psnr_db"], 99.0) for r in rows]
    ax_psnr.plot(slices, finite_psnr, marker="o")
    ax_psnr.set_ylabel("PSNR (dB)")
    ax_psnr.grid(True, alpha=0.3)
    ax_ssim.plot(slices, [r["ssim"] for r in rows], marker="o", color="tab:orange")
    ax_ssim.set_ylabel("SSIM")
    ax_ssim.set_xlabel("slice")
    ax_ssim.set_ylim(-1.0, 1.05)
    ax_ssim.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)


def cmd_evaluate(settings: Settings) -> int:
    files = settings.args.pairs
    if len(files) % 2:
        raise UsageError("evaluate expects an even number of files (reference recon ...)")
    pairs = [(files[i], files[i + 1]) for i in range(0, len(files), 2)]

    references = [np.abs(read_complex(ref)) for ref, _ in pairs]
    reconstructions = [np.abs(read_complex(rec)) for _, rec in pairs]
    peak = max(float(r.max()) for r in references)
    if peak <= 0:
        raise NumericalError("reference volume is identically zero; PSNR peak undefined")

    af = settings.get("af")
    rows = []
    for index, ((_, rec_path), ref, rec) in enumerate(zip(pairs, references, reconstructions)):
        rows.append(
            {
                "file": rec_path,
                "slice": index,
                "af": af,
                "psnr_db": psnr(ref, rec, peak),
                "ssim": ssim(ref, rec, peak),
            }
        )

    out_dir = settings.out_dir()
    out = Path(settings.args.out) if settings.args.out else out_dir / "metrics.csv"
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["file", "slice", "af", "psnr_db", "ssim"])
        for r in rows:
            writer.writerow(
                [
                    r["file"],
                    r["slice"],
                    "" if r["af"] is None else f"{r['af']:g}",
                    _fmt(r["psnr_db"]),
                    _fmt(r["ssim"]),
                ]
            )
    if settings.get("figure"):
        _metrics_figure(out.with_suffix(".png"), rows)
    for r in rows:
        print(f"{r['file']}: PSNR {_fmt(r['psnr_db'])} dB, SSIM {_fmt(r['ssim'])}")
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "mask": cmd_mask,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
        return _COMMANDS[args.command](Settings(args))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
