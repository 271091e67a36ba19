"""HTTP service exposing masks, metrics, reconstruction and chains.

Images travel as base64-encoded image files (PGM or PNG in, PGM out),
masks as the text mask format.  Infinite PSNR values are returned as
the string "inf" since JSON has no infinity literal.

The service is a thin layer: every endpoint delegates to the same
library calls the CLI uses.
"""

from __future__ import annotations

import base64
import binascii
import math

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .errors import ImageFormatError, NumericError, QuarterSRError
from .fsr import MODE_INDEPENDENT, FsrParams, fsr_reconstruct
from .image import center_crop_even, encode_pgm, load_image_bytes, quantize
from .mask import format_mask, generate_random_qs_mask, parse_mask, shift_mask, tile_mask
from .metrics import psnr, ssim
from .nn import load_model
from .pipeline import ChainConfig, run_chain
from .sensor import SampledImage


def _decode_image(data_b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ImageFormatError(f"invalid base64 image payload: {exc}") from exc
    return load_image_bytes(raw)


def _encode_image(image: np.ndarray) -> str:
    return base64.b64encode(encode_pgm(image)).decode("ascii")


def _psnr_value(value: float):
    return "inf" if math.isinf(value) else value


class HealthResponse(BaseModel):
    status: str
    version: str


class MaskGenerateRequest(BaseModel):
    seed: int = 0
    period: int = Field(default=32, ge=2)
    width: int | None = Field(default=None, ge=2)
    height: int | None = Field(default=None, ge=2)


class MaskShiftRequest(BaseModel):
    mask: str
    dx: int = 0
    dy: int = 0


class MaskResponse(BaseModel):
    mask: str


class MetricsRequest(BaseModel):
    image_a: str
    image_b: str
    border_crop: int = Field(default=0, ge=0)


class MetricsResponse(BaseModel):
    psnr_db: float | str
    ssim: float


class FsrOptions(BaseModel):
    block: int = 4
    border: int = 14
    iterations: int = 100
    rho: float = 0.7
    gamma: float = 0.5
    mode: str = MODE_INDEPENDENT

    def to_params(self) -> FsrParams:
        try:
            return FsrParams(
                block_size=self.block,
                border=self.border,
                iterations=self.iterations,
                rho=self.rho,
                gamma=self.gamma,
                mode=self.mode,
            )
        except ValueError as exc:
            raise QuarterSRError(str(exc)) from exc


class ReconstructRequest(BaseModel):
    image: str = Field(description="base64 image file with the sampled values")
    mask: str = Field(description="text mask matching the image size")
    fsr: FsrOptions = Field(default_factory=FsrOptions)


class ImageResponse(BaseModel):
    image: str


class ChainRunRequest(BaseModel):
    reference: str
    sensor: str = "quarter"
    recon: str = "fsr"
    refine: str = "none"
    mask: str | None = None
    mask_seed: int = 0
    model_path: str | None = None
    fsr: FsrOptions = Field(default_factory=FsrOptions)
    border_crop: int = Field(default=0, ge=0)


class ChainRunResponse(BaseModel):
    output: str
    reconstruction: str
    psnr_db: float | str
    ssim: float


def create_app() -> FastAPI:
    app = FastAPI(title="quartersr", version=__version__)

    @app.exception_handler(QuarterSRError)
    async def _domain_error(request, exc: QuarterSRError):
        status = 500 if isinstance(exc, NumericError) else 400
        return JSONResponse(
            status_code=status,
            content={"detail": f"{type(exc).__name__}: {exc}"},
        )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/mask/generate", response_model=MaskResponse)
    def mask_generate(req: MaskGenerateRequest):
        mask = generate_random_qs_mask(period=req.period, seed=req.seed)
        if (req.width is None) != (req.height is None):
            raise QuarterSRError("width and height must be given together")
        if req.width is not None:
            mask = tile_mask(mask, req.width, req.height)
        return MaskResponse(mask=format_mask(mask))

    @app.post("/mask/shift", response_model=MaskResponse)
    def mask_shift(req: MaskShiftRequest):
        mask = parse_mask(req.mask, cell_check=False)
        return MaskResponse(mask=format_mask(shift_mask(mask, req.dx, req.dy)))

    @app.post("/metrics", response_model=MetricsResponse)
    def metrics(req: MetricsRequest):
        a = _decode_image(req.image_a)
        b = _decode_image(req.image_b)
        if req.border_crop:
            crop = np.s_[req.border_crop : -req.border_crop, req.border_crop : -req.border_crop]
            a = a[crop]
            b = b[crop]
        return MetricsResponse(psnr_db=_psnr_value(psnr(a, b)), ssim=ssim(a, b))

    @app.post("/reconstruct", response_model=ImageResponse)
    def reconstruct(req: ReconstructRequest):
        image = _decode_image(req.image)
        mask = parse_mask(req.mask, cell_check=False)
        if mask.bits.shape != image.shape:
            h, w = image.shape
            mask = tile_mask(mask, w, h)
        sampled = SampledImage(values=image * mask.bits, mask=mask)
        recon = fsr_reconstruct(sampled, req.fsr.to_params())
        return ImageResponse(image=_encode_image(recon))

    @app.post("/chain/run", response_model=ChainRunResponse)
    def chain_run(req: ChainRunRequest):
        reference = center_crop_even(_decode_image(req.reference))
        mask = None
        if req.sensor == "quarter":
            mask = (
                parse_mask(req.mask)
                if req.mask is not None
                else generate_random_qs_mask(seed=req.mask_seed)
            )
        model = load_model(req.model_path) if req.model_path else None
        config = ChainConfig(
            sensor=req.sensor,
            reconstructor=req.recon,
            refiner=req.refine,
            mask=mask,
            fsr_params=req.fsr.to_params(),
            model=model,
        )
        output, recon = run_chain(reference, config)
        out8 = quantize(output).astype(np.float64)
        ref = reference
        if req.border_crop:
            crop = np.s_[req.border_crop : -req.border_crop, req.border_crop : -req.border_crop]
            out8 = out8[crop]
            ref = ref[crop]
        return ChainRunResponse(
            output=_encode_image(output),
            reconstruction=_encode_image(recon),
            psnr_db=_psnr_value(psnr(out8, ref)),
            ssim=ssim(out8, ref),
        )

    return app
