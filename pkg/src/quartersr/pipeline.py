"""End-to-end chains, dataset evaluation and report generation.

A chain is sensor -> reconstructor -> optional refiner.  The low-
resolution sensor pairs with bicubic upscaling, the quarter sensor
with frequency-selective reconstruction; the masked refiner only makes
sense on the quarter path.  Reports carry per-image PSNR/SSIM rows
plus one MEAN row per chain, computed on 8-bit-quantized outputs.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as configmod
from .errors import (
    ChainConfigError,
    DataError,
    ImageFormatError,
    ImageReadError,
    UnsupportedImageError,
)
from .fsr import FsrParams, fsr_reconstruct
from .image import bicubic_upscale_x2, center_crop_even, load_image, quantize
from .mask import DEFAULT_SHIFTS, SamplingMask, shift_mask, tile_mask
from .metrics import psnr, ssim
from .nn import Network, apply_vdsr, apply_vdsr_qs
from .sensor import simulate_lowres, simulate_quarter

log = logging.getLogger(__name__)

SENSOR_LOWRES = "lowres"
SENSOR_QUARTER = "quarter"
RECON_BICUBIC = "bicubic"
RECON_FSR = "fsr"
REFINE_NONE = "none"
REFINE_VDSR = "vdsr"
REFINE_VDSR_QS = "vdsr-qs"

VALID_SHIFT_COUNTS = (1, 2, 4, 8)


@dataclass(frozen=True)
class ChainConfig:
    """One sensor/reconstructor/refiner combination.

    The mask is the base pattern; it is tiled to each image's size when
    the chain runs.  A refiner other than "none" needs a loaded model.
    """

    sensor: str
    reconstructor: str
    refiner: str = REFINE_NONE
    mask: SamplingMask | None = None
    fsr_params: FsrParams = field(default_factory=FsrParams)
    model: Network | None = None

    def __post_init__(self):
        if self.sensor not in (SENSOR_LOWRES, SENSOR_QUARTER):
            raise ChainConfigError(f"unknown sensor {self.sensor!r}")
        if self.reconstructor not in (RECON_BICUBIC, RECON_FSR):
            raise ChainConfigError(f"unknown reconstructor {self.reconstructor!r}")
        if self.refiner not in (REFINE_NONE, REFINE_VDSR, REFINE_VDSR_QS):
            raise ChainConfigError(f"unknown refiner {self.refiner!r}")
        if self.sensor == SENSOR_LOWRES and self.reconstructor != RECON_BICUBIC:
            raise ChainConfigError("the lowres sensor requires bicubic reconstruction")
        if self.sensor == SENSOR_QUARTER and self.reconstructor != RECON_FSR:
            raise ChainConfigError("the quarter sensor requires fsr reconstruction")
        if self.refiner == REFINE_VDSR_QS and (
            self.sensor != SENSOR_QUARTER or self.reconstructor != RECON_FSR
        ):
            raise ChainConfigError("vdsr-qs requires the quarter + fsr path")
        if self.refiner != REFINE_NONE and self.model is None:
            raise ChainConfigError(f"refiner {self.refiner!r} needs a model")
        if self.sensor == SENSOR_QUARTER and self.mask is None:
            raise ChainConfigError("the quarter sensor needs a sampling mask")

    def label(self) -> str:
        parts = [self.sensor, self.reconstructor]
        if self.refiner != REFINE_NONE:
            parts.append(self.refiner)
        return "+".join(parts)


def fsr_params_from(cfg: dict[str, str]) -> FsrParams:
    """FsrParams from dotted config keys, with module defaults."""
    defaults = FsrParams()
    try:
        return FsrParams(
            block_size=configmod.get_int(cfg, "fsr.block", defaults.block_size),
            border=configmod.get_int(cfg, "fsr.border", defaults.border),
            iterations=configmod.get_int(cfg, "fsr.iterations", defaults.iterations),
            rho=configmod.get_float(cfg, "fsr.rho", defaults.rho),
            gamma=configmod.get_float(cfg, "fsr.gamma", defaults.gamma),
            mode=configmod.get_str(cfg, "fsr.mode", defaults.mode),
        )
    except ValueError as exc:
        raise ChainConfigError(str(exc)) from exc


def ingest_dataset(directory) -> list[tuple[str, np.ndarray]]:
    """Load every readable image under a directory, sorted by filename.

    Images come back grayscale, center-cropped to even dimensions.
    Unreadable or unsupported files are skipped with a warning; no
    usable image at all is an error.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    items: list[tuple[str, np.ndarray]] = []
    skipped = 0
    for path in sorted(p for p in directory.iterdir() if p.is_file()):
        try:
            image = load_image(path)
        except (ImageReadError, ImageFormatError, UnsupportedImageError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            skipped += 1
            continue
        items.append((path.name, center_crop_even(image)))
    if skipped:
        log.warning("skipped %d unreadable file(s) in %s", skipped, directory)
    if not items:
        raise DataError(f"no usable images in {directory}")
    return items


def _mask_for(config: ChainConfig, shape) -> SamplingMask:
    h, w = shape
    return tile_mask(config.mask, w, h)


def run_chain(reference: np.ndarray, config: ChainConfig):
    """Run one chain on a reference image.

    Returns (output, reconstruction): the final image after optional
    refinement and the intermediate reconstruction, both float arrays
    in [0, 255] at the reference's size.
    """
    reference = np.asarray(reference, dtype=np.float64)
    if config.sensor == SENSOR_LOWRES:
        lowres = simulate_lowres(reference)
        recon = bicubic_upscale_x2(lowres)
        if config.refiner == REFINE_VDSR:
            return apply_vdsr(config.model, recon), recon
        return recon, recon
    mask = _mask_for(config, reference.shape)
    sampled = simulate_quarter(reference, mask)
    recon = fsr_reconstruct(sampled, config.fsr_params)
    if config.refiner == REFINE_VDSR:
        return apply_vdsr(config.model, recon), recon
    if config.refiner == REFINE_VDSR_QS:
        return apply_vdsr_qs(config.model, recon, mask.bits), recon
    return recon, recon


def build_training_set(
    images,
    base_mask: SamplingMask,
    fsr_params: FsrParams | None = None,
    shifts_count: int = 1,
    workers: int = 1,
):
    """(reconstruction, reference, mask bits) triples for training.

    Each image is quarter-sampled and reconstructed once per mask
    shift; shifts_count picks a prefix of the default shift list, so 2
    doubles and 8 octuples the training material.
    """
    if shifts_count not in VALID_SHIFT_COUNTS:
        raise ChainConfigError(
            f"shifts-count must be one of {VALID_SHIFT_COUNTS}, got {shifts_count}"
        )
    fsr_params = fsr_params or FsrParams()
    shifts = DEFAULT_SHIFTS[:shifts_count]
    triples = []
    for name, reference in images:
        h, w = reference.shape
        for dx, dy in shifts:
            mask = tile_mask(shift_mask(base_mask, dx, dy), w, h)
            sampled = simulate_quarter(reference, mask)
            recon = fsr_reconstruct(sampled, fsr_params, workers=workers)
            triples.append((recon, reference, mask.bits))
    return triples


@dataclass(frozen=True)
class EvalRow:
    chain: str
    image: str
    psnr_db: float
    ssim: float


@dataclass
class EvalReport:
    dataset: str
    rows: list[EvalRow]
    means: list[EvalRow]  # one per chain, image field = "MEAN"
    config_echo: list[str]


def _echo(config: ChainConfig, border_crop: int) -> str:
    parts = [config.label()]
    if config.sensor == SENSOR_QUARTER:
        p = config.fsr_params
        parts.append(
            f"fsr(block={p.block_size}, border={p.border}, "
            f"iterations={p.iterations}, rho={p.rho}, gamma={p.gamma}, mode={p.mode})"
        )
    if border_crop:
        parts.append(f"border-crop={border_crop}")
    return " ".join(parts)


def evaluate_dataset(
    dataset,
    configs,
    border_crop: int = 0,
    dataset_id: str = "dataset",
    workers: int = 1,
) -> EvalReport:
    """Run every chain over every image and aggregate PSNR/SSIM.

    Outputs are quantized to the 8-bit grid before the metrics, so a
    bit-exact reconstruction scores an infinite PSNR.  A failing chain
    aborts the evaluation, naming the offending image.
    """
    dataset = list(dataset)
    configs = list(configs)
    if not dataset:
        raise DataError("empty dataset")
    if not configs:
        raise DataError("no chain configurations")
    if border_crop < 0:
        raise ChainConfigError("eval.border-crop must be >= 0")

    labels = [c.label() for c in configs]
    jobs = [
        (label, config, name, image)
        for label, config in zip(labels, configs)
        for name, image in dataset
    ]

    def run(job):
        label, config, name, image = job
        try:
            output, _ = run_chain(image, config)
            out8 = quantize(output).astype(np.float64)
            ref = image
            if border_crop:
                crop = np.s_[border_crop:-border_crop, border_crop:-border_crop]
                out8 = out8[crop]
                ref = ref[crop]
            return EvalRow(
                chain=label, image=name, psnr_db=psnr(out8, ref), ssim=ssim(out8, ref)
            )
        except Exception as exc:
            raise type(exc)(f"chain {label} failed on {name}: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]

    means = []
    count = len(dataset)
    for i, label in enumerate(labels):
        chain_rows = rows[i * count : (i + 1) * count]
        means.append(
            EvalRow(
                chain=label,
                image="MEAN",
                psnr_db=sum(r.psnr_db for r in chain_rows) / len(chain_rows),
                ssim=sum(r.ssim for r in chain_rows) / len(chain_rows),
            )
        )
    echo = [_echo(c, border_crop) for c in configs]
    return EvalReport(dataset=dataset_id, rows=rows, means=means, config_echo=echo)


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"


def generate_report(report: EvalReport, fmt: str = "csv") -> str:
    """Serialize an evaluation report as CSV or markdown.

    CSV columns are chain, image, psnr_db, ssim; each chain's detail
    rows are followed by its MEAN row.  The markdown variant bolds the
    best mean PSNR and the best mean SSIM.
    """
    if fmt == "csv":
        return _report_csv(report)
    if fmt == "markdown":
        return _report_markdown(report)
    raise ChainConfigError(f"unknown report format {fmt!r}")


def _chain_groups(report: EvalReport):
    # Rows are chain-major.  Positional slicing keeps repeated chain labels
    # from merging; fall back to label matching for ragged hand-built reports.
    n_means = len(report.means)
    if n_means and len(report.rows) % n_means == 0:
        per = len(report.rows) // n_means
        slices = [report.rows[i * per : (i + 1) * per] for i in range(n_means)]
        if all(
            row.chain == mean.chain
            for mean, block in zip(report.means, slices)
            for row in block
        ):
            for mean, block in zip(report.means, slices):
                yield mean.chain, block, mean
            return
    for mean in report.means:
        details = [r for r in report.rows if r.chain == mean.chain]
        yield mean.chain, details, mean


def _report_csv(report: EvalReport) -> str:
    lines = ["chain,image,psnr_db,ssim"]
    for _, details, mean in _chain_groups(report):
        for row in details:
            lines.append(f"{row.chain},{row.image},{_fmt(row.psnr_db)},{_fmt(row.ssim)}")
        lines.append(f"{mean.chain},MEAN,{_fmt(mean.psnr_db)},{_fmt(mean.ssim)}")
    return "\n".join(lines) + "\n"


def _report_markdown(report: EvalReport) -> str:
    best_psnr = max(m.psnr_db for m in report.means)
    best_ssim = max(m.ssim for m in report.means)
    lines = [f"# Evaluation: {report.dataset}", ""]
    for echo in report.config_echo:
        lines.append(f"- {echo}")
    if report.config_echo:
        lines.append("")
    lines.append("| chain | image | psnr_db | ssim |")
    lines.append("| --- | --- | --- | --- |")
    for _, details, mean in _chain_groups(report):
        for row in details:
            lines.append(
                f"| {row.chain} | {row.image} | {_fmt(row.psnr_db)} | {_fmt(row.ssim)} |"
            )
        psnr_cell = _fmt(mean.psnr_db)
        ssim_cell = _fmt(mean.ssim)
        if mean.psnr_db == best_psnr:
            psnr_cell = f"**{psnr_cell}**"
        if mean.ssim == best_ssim:
            ssim_cell = f"**{ssim_cell}**"
        lines.append(f"| {mean.chain} | MEAN | {psnr_cell} | {ssim_cell} |")
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str, dataset_id: str = "report") -> EvalReport:
    """Rebuild an EvalReport from generate_report's CSV output."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != "chain,image,psnr_db,ssim":
        raise DataError("not a report CSV (missing header)")
    rows: list[EvalRow] = []
    means: list[EvalRow] = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 4:
            raise DataError(f"malformed report row: {line!r}")
        chain, image, psnr_s, ssim_s = parts
        try:
            row = EvalRow(
                chain=chain, image=image, psnr_db=float(psnr_s), ssim=float(ssim_s)
            )
        except ValueError as exc:
            raise DataError(f"malformed report row: {line!r}") from exc
        (means if image == "MEAN" else rows).append(row)
    if not means:
        raise DataError("report CSV has no MEAN rows")
    return EvalReport(dataset=dataset_id, rows=rows, means=means, config_echo=[])
