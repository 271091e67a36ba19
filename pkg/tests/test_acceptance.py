"""Acceptance gate: one test per release criterion, each printing a verdict.

Every test ends by printing a single "CRITERION n: PASS/FAIL" line (visible
with pytest -s or in captured output) and asserting the same condition, so
the suite both reports and enforces the gate.  Criterion 8 is a directional
trend on a deliberately tiny training run; it is tagged non-blocking.
"""

import math
import time

import numpy as np
import pytest
from conftest import brute_psnr, brute_ssim, synthetic_scene

from quartersr.cli import main as cli_main
from quartersr.fsr import FsrParams, fsr_reconstruct
from quartersr.image import bicubic_upscale_x2, save_image
from quartersr.mask import generate_random_qs_mask, tile_mask
from quartersr.metrics import psnr, ssim
from quartersr.image import quantize
from quartersr.nn import (
    VARIANT_MASKED,
    _conv_forward,
    apply_vdsr_qs,
    compute_gradients,
    init_network,
    load_model,
    loss,
)
from quartersr.pipeline import ChainConfig, build_training_set, evaluate_dataset
from quartersr.sensor import simulate_lowres, simulate_quarter
from quartersr.training import PatchSet, TrainConfig, build_patch_set, train_on_patches


def verdict(number: int, ok: bool, detail: str) -> None:
    print(f"CRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {number}: {detail}"


def test_criterion_1_measured_pixel_preservation():
    """Reconstruction and masked refinement never touch measured pixels."""
    start = time.monotonic()
    rng = np.random.default_rng(101)
    net = init_network(depth=4, width=8, variant=VARIANT_MASKED, seed=101)
    worst_fsr = 0
    worst_net = 0
    for trial in range(50):
        h, w = (48, 64) if trial % 10 == 0 else (32, 32)
        img = rng.uniform(0.0, 255.0, (h, w))
        mask = tile_mask(generate_random_qs_mask(seed=trial), w, h)
        sampled = simulate_quarter(img, mask)
        recon = fsr_reconstruct(sampled)
        on = mask.bits == 1
        worst_fsr = max(worst_fsr, int((recon[on] != img[on]).sum()))
        refined = apply_vdsr_qs(net, recon, mask.bits)
        worst_net = max(worst_net, int((refined[on] != img[on]).sum()))
    elapsed = time.monotonic() - start
    ok = worst_fsr == 0 and worst_net == 0 and elapsed < 60.0
    verdict(
        1,
        ok,
        f"50 trials, fsr mismatches={worst_fsr}, refine mismatches={worst_net}, "
        f"{elapsed:.1f}s (< 60s)",
    )


def _probe(net, x, target, bits):
    """Loss plus the ReLU sign pattern and its distance from zero."""
    h = x[None, :, :, None]
    margin = math.inf
    signs = []
    for i, layer in enumerate(net.layers):
        h, _ = _conv_forward(h, layer)
        if i < len(net.layers) - 1:
            margin = min(margin, float(np.abs(h).min()))
            signs.append((h > 0.0).tobytes())
            h = np.maximum(h, 0.0)
    value = loss(h[0, :, :, 0], target, bits)
    return value, tuple(signs), margin


def _gradcheck_trial(seed: int, masked: bool, step: float):
    """Full-parameter central-difference sweep on one kink-free setup.

    Finite differences at a fixed step are only a valid oracle while no
    ReLU changes sign, so configurations are rejection-sampled until
    every pre-activation clears the step size comfortably, and every
    perturbed evaluation re-checks the sign pattern.
    """
    rng = np.random.default_rng(seed)
    for attempt in range(20000):
        net = init_network(
            depth=3,
            width=8,
            variant=VARIANT_MASKED if masked else "vdsr",
            rng=rng,
        )
        x = rng.uniform(0.0, 1.0, (9, 9))
        target = rng.uniform(-0.1, 0.1, (9, 9))
        bits = rng.integers(0, 2, (9, 9)).astype(np.float64) if masked else None
        _, base_signs, margin = _probe(net, x, target, bits)
        if margin > 4.0 * step:
            break
    else:
        raise AssertionError(f"no kink-free configuration found for seed {seed}")

    keep = (1.0 - bits)[:, :, None] if masked else None
    _, grads = compute_gradients(net, x[:, :, None], target[:, :, None], keep)

    worst = 0.0
    crossings = 0
    for layer, (dw, db) in zip(net.layers, grads):
        for param, grad in ((layer.weights, dw), (layer.bias, db)):
            flat = param.reshape(-1)
            gflat = grad.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + step
                up, signs_up, _ = _probe(net, x, target, bits)
                flat[idx] = orig - step
                down, signs_down, _ = _probe(net, x, target, bits)
                flat[idx] = orig
                if signs_up != base_signs or signs_down != base_signs:
                    crossings += 1
                    continue
                numeric = (up - down) / (2.0 * step)
                analytic = gflat[idx]
                err = abs(analytic - numeric) / max(
                    abs(analytic), abs(numeric), 1e-12
                )
                worst = max(worst, err)
    return worst, crossings


def test_criterion_2_gradient_oracle():
    """Analytic gradients match h=1e-3 central differences to 1e-5."""
    start = time.monotonic()
    step = 1e-3
    worst = 0.0
    crossings = 0
    for trial in range(20):
        masked = trial % 2 == 1
        err, crossed = _gradcheck_trial(seed=500 + trial, masked=masked, step=step)
        worst = max(worst, err)
        crossings += crossed
    elapsed = time.monotonic() - start
    ok = worst < 1e-5 and crossings == 0 and elapsed < 120.0
    verdict(
        2,
        ok,
        f"20 trials, worst rel err {worst:.3g} (< 1e-5), "
        f"{crossings} sign crossings, {elapsed:.1f}s (< 120s)",
    )


def test_criterion_3_single_basis_recovery():
    """A pure horizontal cosine survives quarter sampling almost exactly."""
    start = time.monotonic()
    xx = np.arange(64, dtype=np.float64)[None, :]
    cosine = np.broadcast_to(
        128.0 + 100.0 * np.cos(2.0 * np.pi * 3.0 * xx / 32.0), (64, 64)
    ).copy()
    scores = []
    for seed in range(5):
        mask = tile_mask(generate_random_qs_mask(seed=seed), 64, 64)
        recon = fsr_reconstruct(simulate_quarter(cosine, mask))
        scores.append(psnr(recon, cosine))
    const_errs = []
    for level in (0.0, 131.7, 255.0):
        img = np.full((32, 32), level)
        mask = generate_random_qs_mask(seed=77)
        recon = fsr_reconstruct(simulate_quarter(img, mask))
        const_errs.append(float(np.abs(recon - img).max()))
    elapsed = time.monotonic() - start
    ok = min(scores) > 40.0 and max(const_errs) < 1e-3 and elapsed < 60.0
    verdict(
        3,
        ok,
        f"cosine PSNR min {min(scores):.2f} dB (> 40), "
        f"constant max err {max(const_errs):.2e} (< 1e-3), {elapsed:.1f}s (< 60s)",
    )


def test_criterion_4_aliasing_separation():
    """Period-2 stripes: quarter sampling wins by far over 2x2 averaging."""
    img = np.zeros((64, 64))
    img[:, 1::2] = 255.0
    low = bicubic_upscale_x2(simulate_lowres(img))
    psnr_low = psnr(low, img)
    mask = tile_mask(generate_random_qs_mask(seed=4), 64, 64)
    recon = fsr_reconstruct(simulate_quarter(img, mask))
    psnr_quarter = psnr(recon, img)

    closed_form = 10.0 * math.log10(255.0**2 / 127.5**2)
    flat = bool(np.allclose(low, 127.5, atol=1e-9))
    ok = (
        psnr_quarter - psnr_low > 10.0
        and flat
        and abs(psnr_low - closed_form) < 1e-6
    )
    verdict(
        4,
        ok,
        f"quarter {psnr_quarter:.1f} dB vs lowres {psnr_low:.4f} dB "
        f"(gap > 10 dB), lowres flat at 127.5: {flat}",
    )


def _overfit_run():
    rng = np.random.default_rng(900)
    patch_in = rng.uniform(0.0, 1.0, (1, 41, 41))
    patch_target = rng.uniform(-0.05, 0.05, (1, 41, 41))
    patches = PatchSet(inputs=patch_in, targets=patch_target, keep=None)
    config = TrainConfig(
        epochs=500,
        batch_size=1,
        lr_decay_every=500,
        depth=20,
        width=64,
        augment=False,
        seed=900,
    )
    return train_on_patches(patches, config)


def test_criterion_5_overfit_probe():
    """Full-depth training memorizes one patch and is bit-reproducible."""
    net_a, hist_a = _overfit_run()
    net_b, hist_b = _overfit_run()
    ratio = hist_a[0].loss / hist_a[-1].loss
    identical = all(
        (la.weights == lb.weights).all() and (la.bias == lb.bias).all()
        for la, lb in zip(net_a.layers, net_b.layers)
    ) and [h.loss for h in hist_a] == [h.loss for h in hist_b]
    ok = ratio >= 100.0 and identical
    verdict(
        5,
        ok,
        f"500 steps, loss ratio {ratio:.0f}x (>= 100x), "
        f"bit-reproducible: {identical}",
    )


def test_criterion_6_masked_loss_scaling():
    """Zeroing measured pixels removes a quarter of an i.i.d. loss."""
    rng = np.random.default_rng(600)
    ratios = []
    for trial in range(1000):
        diff = rng.normal(0.0, 1.0, (32, 32))
        bits = generate_random_qs_mask(seed=trial).bits
        plain = loss(diff, np.zeros_like(diff))
        masked = loss(diff, np.zeros_like(diff), bits)
        ratios.append(masked / plain)
    mean_ratio = float(np.mean(ratios))
    ok = abs(mean_ratio - 0.75) < 0.01
    verdict(6, ok, f"mean masked/unmasked ratio {mean_ratio:.4f} (0.75 +/- 0.01)")


def test_criterion_7_metric_oracles():
    """Fast metrics agree with naive loop implementations and closed forms."""
    rng = np.random.default_rng(700)
    worst_psnr = 0.0
    worst_ssim = 0.0
    for _ in range(100):
        a = rng.uniform(0.0, 255.0, (24, 24))
        b = np.clip(a + rng.normal(0.0, rng.uniform(1.0, 60.0), a.shape), 0.0, 255.0)
        ref_p = brute_psnr(a, b)
        worst_psnr = max(worst_psnr, abs(psnr(a, b) - ref_p) / abs(ref_p))
        ref_s = brute_ssim(a, b)
        worst_ssim = max(worst_ssim, abs(ssim(a, b) - ref_s) / abs(ref_s))

    const_a = np.full((16, 16), 100.0)
    closed = [
        math.isinf(psnr(const_a, const_a)),
        abs(psnr(np.zeros((8, 8)), np.full((8, 8), 255.0)) - 0.0) < 1e-12,
        abs(
            psnr(const_a, np.full((16, 16), 116.0))
            - 10.0 * math.log10(255.0**2 / 256.0)
        )
        < 1e-12,
        abs(ssim(const_a, const_a) - 1.0) < 1e-12,
        abs(ssim(const_a, np.full((16, 16), 150.0)) - 30006.5025 / 32506.5025)
        < 1e-12,
    ]
    ok = worst_psnr < 1e-9 and worst_ssim < 1e-6 and all(closed)
    verdict(
        7,
        ok,
        f"100 pairs, psnr err {worst_psnr:.2e} (< 1e-9), "
        f"ssim err {worst_ssim:.2e} (< 1e-6), closed forms {sum(closed)}/5",
    )


def _textured_scene(rng, h, w):
    """Piecewise shapes over a gradient plus smooth texture.

    Harder content than the smooth conftest scenes: the sharp edges
    leave structured reconstruction artifacts for the refiner to learn
    from within a couple of epochs.
    """
    yy, xx = np.mgrid[0:h, 0:w]
    img = 70.0 + 110.0 * (0.6 * xx + 0.4 * yy) / (h + w)
    for _ in range(9):
        y0, x0 = rng.integers(0, h - 8), rng.integers(0, w - 8)
        dy, dx = rng.integers(6, h // 2), rng.integers(6, w // 2)
        img[y0 : y0 + dy, x0 : x0 + dx] = rng.uniform(10.0, 245.0)
    for _ in range(4):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        r = rng.uniform(4.0, 12.0)
        disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        img[disk] = rng.uniform(10.0, 245.0)
    coarse = rng.uniform(-14.0, 14.0, (h // 4, w // 4))
    img += bicubic_upscale_x2(bicubic_upscale_x2(coarse))
    return np.clip(img, 0.0, 255.0)


@pytest.mark.xfail(
    strict=False,
    reason="directional trend on a deliberately tiny training run; non-blocking",
)
def test_criterion_8_directional_trend(tmp_path):
    """Tiny masked training should beat plain reconstruction and gain from shifts."""
    start = time.monotonic()
    rng = np.random.default_rng(2024)
    train_dir = tmp_path / "train"
    train_dir.mkdir()
    for i in range(10):
        save_image(_textured_scene(rng, 96, 96), train_dir / f"t{i:02d}.pgm")
    held = [(f"h{i}.pgm", quantize(_textured_scene(rng, 96, 96))) for i in range(5)]

    models = {}
    for shifts in (1, 4):
        out_dir = tmp_path / f"run{shifts}"
        code = cli_main(
            [
                "train",
                "--data", str(train_dir),
                "--refine", "vdsr-qs",
                "--toy",
                "--shifts-count", str(shifts),
                "--patch-stride", "7",
                "--batch-size", "16",
                "--out-dir", str(out_dir),
            ]
        )
        assert code == 0
        models[shifts] = out_dir / "model.bin"

    mask = generate_random_qs_mask(seed=0)
    base = ChainConfig(sensor="quarter", reconstructor="fsr", mask=mask)
    qs1 = ChainConfig(
        sensor="quarter", reconstructor="fsr", refiner="vdsr-qs",
        mask=mask, model=load_model(models[1]),
    )
    qs4 = ChainConfig(
        sensor="quarter", reconstructor="fsr", refiner="vdsr-qs",
        mask=mask, model=load_model(models[4]),
    )
    report = evaluate_dataset(held, [base, qs1, qs4], dataset_id="held-out")
    fsr_db, qs1_db, qs4_db = (m.psnr_db for m in report.means)
    elapsed = time.monotonic() - start

    ok = qs1_db >= fsr_db + 0.1 and qs4_db >= qs1_db and elapsed < 1800.0
    verdict(
        8,
        ok,
        f"fsr {fsr_db:.2f} dB, +vdsr-qs(1 shift) {qs1_db:.2f} dB, "
        f"+vdsr-qs(4 shifts) {qs4_db:.2f} dB, {elapsed:.0f}s (< 1800s)",
    )


def test_criterion_9_shift_bookkeeping():
    """shifts-count multiplies the pre-dihedral pair count exactly."""
    rng = np.random.default_rng(901)
    images = [
        ("a", synthetic_scene(rng, 48, 48)),
        ("b", synthetic_scene(rng, 48, 48)),
    ]
    mask = generate_random_qs_mask(seed=9)
    fast = FsrParams(iterations=2)
    config = TrainConfig(augment=False, depth=2, width=2)
    counts = {}
    for shifts in (1, 2, 4, 8):
        triples = build_training_set(images, mask, fast, shifts_count=shifts)
        counts[shifts] = len(build_patch_set(triples, config))
    base = counts[1]
    ok = base > 0 and all(counts[k] == k * base for k in (1, 2, 4, 8))
    verdict(9, ok, f"pair counts {counts} scale exactly from {base}")
