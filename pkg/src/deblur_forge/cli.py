"""Command-line entry point ``deblur-forge``.

Exit codes: 0 on success, 2 for invalid flags or unreadable inputs, 1 when
the computation itself fails. Every subcommand prints a short human summary,
or a single JSON document on stdout with ``--json``. Log lines go to stderr.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from .image import load_image, save_image
from .optim import LbfgsConfig
from .pipeline import REASSEMBLY_MODES, DeblurBackend, deblur_tiled, make_dataset, plan_tiles, synth_pair
from .psf import DEFAULT_LAMBDA, PsfModel, fit_psf, psf_octagon_report
from .warp import WarpMatrix, degree_sweep, fit_warp, grid_mapping_error

log = logging.getLogger("deblur_forge")

IMAGE_SUFFIXES = (".png", ".pgm")


class _ClickHandler(logging.Handler):
    """Writes records to whatever stderr click currently sees."""

    def emit(self, record):
        try:
            click.echo(self.format(record), err=True)
        except Exception:  # pragma: no cover
            self.handleError(record)


def _configure_logging(quiet: bool) -> None:
    pkg = logging.getLogger("deblur_forge")
    if not any(isinstance(h, _ClickHandler) for h in pkg.handlers):
        handler = _ClickHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        pkg.addHandler(handler)
        pkg.propagate = False
    pkg.setLevel(logging.WARNING if quiet else logging.INFO)


class InputError(click.ClickException):
    """Unreadable or inconsistent input files; exits with status 2."""

    exit_code = 2


class RunError(click.ClickException):
    exit_code = 1


@contextmanager
def _reading(what: str):
    try:
        yield
    except (ValueError, OSError) as exc:
        raise InputError(f"cannot use {what}: {exc}") from exc


@contextmanager
def _working(stage: str):
    try:
        yield
    except click.ClickException:
        raise
    except Exception as exc:
        raise RunError(f"{stage} failed: {exc}") from exc


def _emit(ctx: click.Context, payload: dict, lines: list[str]) -> None:
    if ctx.obj["json"]:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for ln in lines:
            click.echo(ln)


def _odd_size(ctx, param, value):
    if value is not None and (value < 1 or value % 2 == 0):
        raise click.BadParameter("must be a positive odd integer")
    return value


def _config(max_iters: int | None) -> LbfgsConfig | None:
    return None if max_iters is None else LbfgsConfig(max_iters=max_iters)


def _image_files(folder: Path) -> list[Path]:
    files = sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise InputError(f"no .png or .pgm images in {folder}")
    return files


existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
existing_dir = click.Path(exists=True, file_okay=False, path_type=Path)
out_file = click.Path(dir_okay=False, writable=True, path_type=Path)
out_dir_type = click.Path(file_okay=False, path_type=Path)

json_option = click.option("--json", "as_json", is_flag=True, help="Print a JSON report on stdout.")
max_iters_option = click.option(
    "--max-iters", type=click.IntRange(min=1), default=None, help="Cap on L-BFGS iterations per stage."
)


def _with_json(fn):
    """Let ``--json`` be given after the subcommand as well as before it."""

    @json_option
    @click.pass_context
    def wrapper(ctx, as_json, **kwargs):
        ctx.obj["json"] = ctx.obj.get("json", False) or as_json
        return ctx.invoke(fn, **kwargs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__click_params__ = list(getattr(fn, "__click_params__", [])) + wrapper.__click_params__
    return wrapper


@click.group()
@json_option
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True, help="Maximum worker threads.")
@click.option("-q", "--quiet", is_flag=True, help="Only log warnings and errors.")
@click.version_option(package_name="deblur-forge")
@click.pass_context
def main(ctx, as_json, threads, quiet):
    """Estimate a blur forward model from sharp/blurry pairs and deblur images with it."""
    _configure_logging(quiet)
    ctx.ensure_object(dict)
    ctx.obj.update(json=as_json, threads=threads)


# ---------------------------------------------------------------- estimate-warp


@main.command("estimate-warp")
@click.option("--sharp", required=True, type=existing_file, help="Sharp reference image.")
@click.option("--blurry", required=True, type=existing_file, help="Blurry image to align onto the sharp one.")
@click.option("--degree", type=click.IntRange(min=1), default=3, show_default=True, help="Polynomial degree.")
@click.option("--out", required=True, type=out_file, help="Warp matrix text file to write.")
@click.option("--sweep", is_flag=True, help="Fit degrees 1..DEGREE with warm starts and report every loss.")
@click.option("--reference", type=existing_file, default=None, help="Known warp to report the grid mapping error against.")
@click.option("--figure", type=out_file, default=None, help="Write a warp grid plot (PNG).")
@click.option("--sweep-figure", type=out_file, default=None, help="Write the degree sweep plot (PNG); implies --sweep.")
@max_iters_option
@_with_json
@click.pass_context
def estimate_warp(ctx, sharp, blurry, degree, out, sweep, reference, figure, sweep_figure, max_iters):
    """Fit the polynomial warp that aligns BLURRY onto SHARP."""
    with _reading("input images"):
        sharp_img = load_image(sharp)
        blurry_img = load_image(blurry)
        if sharp_img.shape != blurry_img.shape:
            raise ValueError(f"sharp {sharp_img.shape} and blurry {blurry_img.shape} differ in shape")
    ref = None
    if reference is not None:
        with _reading("reference warp"):
            ref = WarpMatrix.load(reference)

    config = _config(max_iters)
    payload = {"degree": degree, "out": str(out)}
    with _working("warp estimation"):
        if sweep or sweep_figure:
            results = degree_sweep(blurry_img, sharp_img, range(1, degree + 1), config)
            warp = results[-1][2]
            loss = results[-1][1]
            payload["sweep"] = [{"degree": d, "loss": l} for d, l, _ in results]
            iterations = None
            converged = None
        else:
            warp, rep = fit_warp(blurry_img, sharp_img, degree, config=config)
            loss, iterations, converged = rep.final_loss, rep.iterations, rep.converged
        warp.save(out)
    payload.update(loss=loss, iterations=iterations, converged=converged)
    lines = [f"warp (degree {degree}) written to {out}", f"centred MSE after warping: {loss:.6g}"]
    for entry in payload.get("sweep", []):
        lines.append(f"  degree {entry['degree']}: loss {entry['loss']:.6g}")
    if ref is not None:
        mean_err, max_err = grid_mapping_error(warp, ref, sharp_img.shape)
        payload.update(grid_error_px=mean_err, grid_error_max_px=max_err)
        lines.append(f"grid mapping error vs reference: mean {mean_err:.4g} px, max {max_err:.4g} px")
    if figure or sweep_figure:
        with _working("plotting"):
            from . import plots

            if figure:
                plots.plot_warp_grid(warp, sharp_img.shape, figure, reference=ref)
                payload["figure"] = str(figure)
            if sweep_figure:
                plots.plot_degree_sweep([e["degree"] for e in payload["sweep"]], [e["loss"] for e in payload["sweep"]], sweep_figure)
                payload["sweep_figure"] = str(sweep_figure)
    _emit(ctx, payload, lines)


# ---------------------------------------------------------------- estimate-psf


@main.command("estimate-psf")
@click.option("--sharp", required=True, type=existing_file, help="Sharp reference image.")
@click.option("--blurry", required=True, type=existing_file, help="Blurry image (unwarped, same size).")
@click.option("--warp", "warp_path", type=existing_file, default=None, help="Warp file from estimate-warp (identity if omitted).")
@click.option("--size", type=int, default=31, show_default=True, callback=_odd_size, help="Odd PSF side length.")
@click.option("--lambda", "lam", type=click.FloatRange(min=0), default=DEFAULT_LAMBDA, show_default=True, help="L1 weight on the kernel.")
@click.option("--refine-warp", is_flag=True, help="Alternate kernel fits with warp refinement.")
@click.option("--out", required=True, type=out_file, help="PSF model text file to write.")
@click.option("--warp-out", type=out_file, default=None, help="Where to write the refined warp.")
@click.option("--figure", type=out_file, default=None, help="Write a kernel heat map (PNG).")
@max_iters_option
@_with_json
@click.pass_context
def estimate_psf(ctx, sharp, blurry, warp_path, size, lam, refine_warp, out, warp_out, figure, max_iters):
    """Fit the PSF kernel and brightness offset of the forward model."""
    with _reading("input images"):
        sharp_img = load_image(sharp)
        blurry_img = load_image(blurry)
        if sharp_img.shape != blurry_img.shape:
            raise ValueError(f"sharp {sharp_img.shape} and blurry {blurry_img.shape} differ in shape")
        if size > min(sharp_img.shape):
            raise ValueError(f"PSF size {size} exceeds the image {sharp_img.shape}")
    warp = None
    if warp_path is not None:
        with _reading("warp file"):
            warp = WarpMatrix.load(warp_path)

    with _working("PSF estimation"):
        model, warp, rep = fit_psf(sharp_img, blurry_img, warp, size, lam, refine_warp, _config(max_iters))
        model.save(out)
        if warp_out is not None:
            warp.save(warp_out)
        stats = psf_octagon_report(model.kernel)
    payload = {
        "out": str(out),
        "size": size,
        "lambda": lam,
        "tau": model.tau,
        "kernel_sum": float(model.kernel.sum()),
        "loss": rep.final_loss,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "support_radius": stats["support_radius"],
        "negativity_fraction": stats["negativity_fraction"],
    }
    if warp_out is not None:
        payload["warp_out"] = str(warp_out)
    if figure:
        with _working("plotting"):
            from . import plots

            plots.plot_kernels({"estimated PSF": model.kernel}, figure)
            payload["figure"] = str(figure)
    lines = [
        f"PSF ({size}x{size}) written to {out}",
        f"tau {model.tau:.6g}, kernel sum {payload['kernel_sum']:.6g}, loss {rep.final_loss:.6g}",
        f"{rep.iterations} iterations, converged: {rep.converged}",
    ]
    _emit(ctx, payload, lines)


# ---------------------------------------------------------------- synth


def _load_psf(path: Path) -> PsfModel:
    with _reading("PSF file"):
        return PsfModel.load(path)


@main.command()
@click.option("--sharp-dir", required=True, type=existing_dir, help="Folder of sharp PNG/PGM images.")
@click.option("--psf", "psf_path", required=True, type=existing_file, help="PSF model file.")
@click.option("--out-dir", required=True, type=out_dir_type, help="Folder for the synthetic pairs.")
@click.option("--bits", type=click.Choice(["8", "16"]), default="16", show_default=True, help="PNG bit depth.")
@_with_json
@click.pass_context
def synth(ctx, sharp_dir, psf_path, out_dir, bits):
    """Blur every sharp image with the PSF model, writing cropped sharp/blurry pairs."""
    model = _load_psf(psf_path)
    files = _image_files(sharp_dir)
    with _reading("sharp images"):
        images = [load_image(f) for f in files]
        for f, img in zip(files, images):
            if model.size > min(img.shape):
                raise ValueError(f"{f}: smaller than the {model.size}x{model.size} kernel")

    out_dir.mkdir(parents=True, exist_ok=True)

    def one(item):
        f, img = item
        pair = synth_pair(img, model)
        sharp_out = out_dir / f"{f.stem}_sharp.png"
        blurry_out = out_dir / f"{f.stem}_blurry.png"
        save_image(pair.sharp, sharp_out, int(bits))
        save_image(pair.blurry, blurry_out, int(bits))
        return {"source": str(f), "sharp": str(sharp_out), "blurry": str(blurry_out), "shape": list(pair.sharp.shape)}

    with _working("synthesis"), ThreadPoolExecutor(ctx.obj["threads"]) as pool:
        written = list(pool.map(one, zip(files, images)))
    _emit(ctx, {"pairs": written, "count": len(written)}, [f"{len(written)} synthetic pairs written to {out_dir}"])


# ---------------------------------------------------------------- dataset


def _read_manifest(path: Path) -> list[tuple[Path, Path, Path]]:
    with _reading("manifest"):
        entries = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(entries, list) or not entries:
            raise ValueError("manifest must be a non-empty JSON list")
        base = path.parent
        triples = []
        for i, e in enumerate(entries):
            if not isinstance(e, dict) or not {"sharp", "blurry", "warp"} <= e.keys():
                raise ValueError(f"entry {i} needs 'sharp', 'blurry' and 'warp' keys")
            triples.append(tuple(base / e[k] for k in ("sharp", "blurry", "warp")))
    return triples


@main.command()
@click.option("--pairs", "manifest", required=True, type=existing_file, help="JSON list of {sharp, blurry, warp} paths.")
@click.option("--naturals-dir", type=existing_dir, default=None, help="Folder of sharp natural images to synthesise from.")
@click.option("--psf", "psf_path", required=True, type=existing_file, help="PSF model file.")
@click.option("--out-dir", required=True, type=out_dir_type, help="Folder for train/ and test/ pairs.")
@click.option("--train-count", type=click.IntRange(min=0), default=None, help="Measured pairs used for training (default 90%).")
@click.option("--bits", type=click.Choice(["8", "16"]), default="16", show_default=True, help="PNG bit depth.")
@_with_json
@click.pass_context
def dataset(ctx, manifest, naturals_dir, psf_path, out_dir, train_count, bits):
    """Assemble aligned measured pairs and synthetic pairs into train/test splits."""
    triples = _read_manifest(manifest)
    if train_count is not None and train_count > len(triples):
        raise click.BadParameter(f"{train_count} exceeds the {len(triples)} pairs in the manifest", param_hint="--train-count")
    model = _load_psf(psf_path)
    with _reading("measured pairs"):
        pairs = []
        for s, b, w in triples:
            sharp_img, blurry_img = load_image(s), load_image(b)
            if sharp_img.shape != blurry_img.shape:
                raise ValueError(f"{s} and {b} differ in shape")
            pairs.append((sharp_img, blurry_img, WarpMatrix.load(w)))
    naturals = []
    if naturals_dir is not None:
        with _reading("natural images"):
            naturals = [load_image(f) for f in _image_files(naturals_dir)]

    with _working("dataset assembly"):
        splits = make_dataset(pairs, naturals, model, train_count)
        index = {}
        for name, items in splits.items():
            folder = out_dir / name
            folder.mkdir(parents=True, exist_ok=True)
            index[name] = []
            for i, pair in enumerate(items):
                s_out = folder / f"{i:04d}_sharp.png"
                b_out = folder / f"{i:04d}_blurry.png"
                save_image(pair.sharp, s_out, int(bits))
                save_image(pair.blurry, b_out, int(bits))
                index[name].append({"sharp": s_out.name, "blurry": b_out.name, "source": pair.source})
        (out_dir / "index.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    payload = {"train": len(index["train"]), "test": len(index["test"]), "index": str(out_dir / "index.json")}
    _emit(ctx, payload, [f"{payload['train']} train and {payload['test']} test pairs written to {out_dir}"])


# ---------------------------------------------------------------- deblur


@main.command()
@click.option("--input", "input_path", required=True, type=existing_file, help="Image to deblur.")
@click.option("--psf", "psf_path", type=existing_file, default=None, help="PSF model file (not needed for identity).")
@click.option("--backend", type=click.Choice(["identity", "wiener", "richardson_lucy"]), default="wiener", show_default=True)
@click.option("--epsilon", type=click.FloatRange(min=0, min_open=True), default=1e-4, show_default=True, help="Wiener spectral floor.")
@click.option("--iterations", type=click.IntRange(min=1), default=30, show_default=True, help="Richardson-Lucy iterations.")
@click.option("--core", type=click.IntRange(min=1), default=640, show_default=True, help="Tile core size in pixels.")
@click.option("--overlap", type=click.IntRange(min=0), default=160, show_default=True, help="Tile context on each side.")
@click.option("--reassembly", type=click.Choice(REASSEMBLY_MODES), default="blend", show_default=True)
@click.option("--out", required=True, type=out_file, help="Output image (.png or .pgm).")
@click.option("--bits", type=click.Choice(["8", "16"]), default="8", show_default=True, help="Output bit depth.")
@_with_json
@click.pass_context
def deblur(ctx, input_path, psf_path, backend, epsilon, iterations, core, overlap, reassembly, out, bits):
    """Deblur an image tile by tile."""
    if overlap >= core:
        raise click.BadParameter(f"must be smaller than --core ({core})", param_hint="--overlap")
    if backend != "identity" and psf_path is None:
        raise click.BadParameter(f"the {backend} backend needs a PSF", param_hint="--psf")
    model = _load_psf(psf_path) if psf_path is not None else None
    with _reading("input image"):
        img = load_image(input_path)
    layout = plan_tiles(*img.shape, core, overlap)
    with _working("deblurring"):
        fn = DeblurBackend(backend, model, epsilon, iterations)
        result = deblur_tiled(img, fn, core, overlap, reassembly, workers=ctx.obj["threads"])
        save_image(result, out, int(bits))
    payload = {
        "out": str(out),
        "backend": backend,
        "reassembly": reassembly,
        "tiles": len(layout.origins),
        "shape": list(img.shape),
        "clipped_fraction": float(np.mean((result < 0) | (result > 1))),
    }
    _emit(ctx, payload, [f"{backend} deblur over {payload['tiles']} tile(s) written to {out}"])


# ---------------------------------------------------------------- score


@main.command()
@click.option("--image", "images", multiple=True, type=existing_file, help="Image to recognise (repeatable).")
@click.option("--truth", "truths", multiple=True, required=True, type=existing_file, help="Ground-truth text file (repeatable).")
@click.option("--recognized", "recognized", multiple=True, type=existing_file, help="Already recognised text instead of --image.")
@click.option("--ocr-cmd", default=None, help="OCR command with an {input} placeholder (default: $DEBLUR_FORGE_OCR_CMD).")
@_with_json
@click.pass_context
def score(ctx, images, truths, recognized, ocr_cmd):
    """OCR score (0..100) of each image against its ground-truth text."""
    from .evaluation import OcrError, ocr_command, ocr_score, run_external_ocr

    sources = recognized or images
    if images and recognized:
        raise click.UsageError("give either --image or --recognized, not both")
    if len(sources) != len(truths):
        raise click.UsageError(f"{len(sources)} inputs but {len(truths)} --truth files")
    if not sources:
        raise click.UsageError("need at least one --image or --recognized")

    with _reading("text files"):
        gt_texts = [t.read_text(encoding="utf-8") for t in truths]
        rec_texts = [r.read_text(encoding="utf-8") for r in recognized] if recognized else None

    if rec_texts is None:
        command = ocr_cmd or ocr_command()
        if not command:
            payload = {"status": "OCR unavailable", "per_image": [], "mean_score": None}
            _emit(ctx, payload, ["OCR unavailable: set DEBLUR_FORGE_OCR_CMD or pass --ocr-cmd"])
            return
        try:
            rec_texts = [run_external_ocr(p, command) for p in images]
        except OcrError as exc:
            raise RunError(str(exc)) from exc

    per_image = []
    for src, truth, gt, rec in zip(sources, truths, gt_texts, rec_texts):
        entry = {"input": str(src), "truth": str(truth)}
        entry.update(ocr_score(gt, rec).to_dict())
        per_image.append(entry)
    mean = float(np.mean([e["score"] for e in per_image]))
    payload = {"status": "ok", "per_image": per_image, "mean_score": mean}
    lines = [f"{e['input']}: score {e['score']:.2f} (distance {e['distance']})" for e in per_image]
    lines.append(f"mean score {mean:.2f}")
    _emit(ctx, payload, lines)


# ---------------------------------------------------------------- demo


@main.command()
@click.option("--seed", type=int, default=42, show_default=True, help="Seed for the generated scene, warp and noise.")
@click.option("--out-dir", required=True, type=out_dir_type, help="Folder for images, estimates, metrics and figures.")
@click.option("--no-figures", is_flag=True, help="Skip the matplotlib figures.")
@_with_json
@click.pass_context
def demo(ctx, seed, out_dir, no_figures):
    """Run the whole pipeline on generated data with known ground truth."""
    from .demo import StageError, run_demo

    try:
        metrics = run_demo(seed, out_dir, figures=not no_figures)
    except StageError as exc:
        raise RunError(str(exc)) from exc
    lines = [
        f"warp grid error {metrics['warp_grid_error_px']:.4g} px",
        f"kernel relative error {metrics['kernel_rel_error']:.4g}, tau {metrics['tau_estimate']:.4g}",
        f"PSNR blurry {metrics['psnr_blurry_db']:.2f} dB -> deblurred {metrics['psnr_deblurred_db']:.2f} dB",
        f"metrics written to {Path(out_dir) / 'metrics.json'}",
        "all checks passed" if metrics["passed"] else "some checks FAILED",
    ]
    _emit(ctx, metrics, lines)
    if not metrics["passed"]:
        ctx.exit(1)


if __name__ == "__main__":  # pragma: no cover
    main()
