"""Compressibility and visual-leakage measurements.

Two desk-scale checks: ciphertexts should compress under JPEG nearly as
well as their plaintexts (size ratio close to 1 at a given quality
factor), and ciphertexts should carry almost no visual information
(SSIM against the plaintext far below 1).

One fixed JPEG configuration is used throughout and recorded in every
report header: baseline (non-progressive) encoding with 4:2:0 chroma
subsampling.  Absolute byte counts depend on the encoder; only ratios
and orderings are meaningful across environments.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import PIL
from PIL import Image

from . import blocks as blk
from . import cipher as ciph
from .errors import RangeError, ShapeError, UsageError
from .keying import MasterKey

JPEG_SUBSAMPLING = 2  # PIL code for 4:2:0
SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2

CORPUS_EXTENSIONS = (".png", ".jpg", ".jpeg")


def jpeg_bytes(image: np.ndarray, quality_factor: int) -> bytes:
    """Baseline JPEG, 4:2:0 subsampling, at the given quality factor."""
    if not 1 <= quality_factor <= 100:
        raise RangeError(f"quality factor {quality_factor} not in [1, 100]")
    buf = io.BytesIO()
    Image.fromarray(blk.validate_image(image)).save(
        buf, format="JPEG", quality=quality_factor, subsampling=JPEG_SUBSAMPLING
    )
    return buf.getvalue()


def jpeg_roundtrip_size(image: np.ndarray, quality_factor: int) -> tuple[int, np.ndarray]:
    """Encoded byte count plus the decoded image for downstream checks."""
    data = jpeg_bytes(image, quality_factor)
    with Image.open(io.BytesIO(data)) as decoded:
        arr = np.asarray(decoded.convert("RGB"))
    return len(data), arr


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(blk.validate_image(image)).save(buf, format="PNG")
    return buf.getvalue()


def _window_sums(x: np.ndarray, w: int) -> np.ndarray:
    """Sums over every w x w window via an integral image.

    Inputs are integer-valued float64 arrays, so all sums are exact
    (well below 2**53); dividing by w*w (a power of two for w=8) keeps
    the window means exact as well.
    """
    c = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    c[1:, 1:] = x.cumsum(axis=0).cumsum(axis=1)
    return c[w:, w:] - c[:-w, w:] - c[w:, :-w] + c[:-w, :-w]


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    area = SSIM_WINDOW * SSIM_WINDOW
    mx = _window_sums(x, SSIM_WINDOW) / area
    my = _window_sums(y, SSIM_WINDOW) / area
    vx = _window_sums(x * x, SSIM_WINDOW) / area - mx * mx
    vy = _window_sums(y * y, SSIM_WINDOW) / area - my * my
    cxy = _window_sums(x * y, SSIM_WINDOW) / area - mx * my
    num = (2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity with an 8x8 sliding window.

    Computed per channel over every window position, then averaged over
    windows and channels.  C1 = (0.01*255)^2, C2 = (0.03*255)^2.
    """
    a = blk.validate_image(a)
    b = blk.validate_image(b)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ShapeError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    af = a.astype(np.float64)
    bf = b.astype(np.float64)
    return float(
        np.mean([_ssim_channel(af[..., c], bf[..., c]) for c in range(blk.CHANNELS)])
    )


def list_corpus(corpus_dir) -> list[Path]:
    """Corpus image paths in sorted order (the normative record order)."""
    root = Path(corpus_dir)
    if not root.is_dir():
        raise UsageError(f"corpus directory {root} does not exist")
    paths = sorted(
        p for p in root.rglob("*") if p.suffix.lower() in CORPUS_EXTENSIONS
    )
    if not paths:
        raise UsageError(f"corpus directory {root} holds no decodable images")
    return paths


def _load_corpus_image(path: Path, center_crop: bool, block_size: int) -> np.ndarray:
    image = blk.load_image(path)
    if center_crop:
        image = blk.center_crop_to_multiple(image, block_size)
    return image


def _report_header(spec: ciph.CipherSpec, extra: dict) -> dict:
    header = {
        "codec": "JPEG baseline, 4:2:0 subsampling (Pillow)",
        "pillow_version": PIL.__version__,
        "lossless_codec": "PNG",
        "block_size": spec.block_size,
        "mode": spec.mode.value,
        "steps": sorted(spec.steps),
    }
    header.update(extra)
    return header


@dataclass
class CompressionReport:
    header: dict
    per_image: list[dict]  # sorted by path
    totals: dict = field(init=False)
    ratios: dict = field(init=False)

    def __post_init__(self):
        settings = ["uncompressed", "png"] + [
            f"qf{q}" for q in self.header["quality_factors"]
        ]
        self.totals = {}
        for kind in ("plain", "encrypted"):
            for s in settings:
                self.totals[f"{kind}_{s}"] = sum(
                    r[f"{kind}_{s}"] for r in self.per_image
                )
        self.ratios = {
            s: self.totals[f"encrypted_{s}"] / self.totals[f"plain_{s}"]
            for s in settings
        }

    def to_records(self) -> list[dict]:
        records = [{"record": "header", **self.header}]
        records += [{"record": "image", **r} for r in self.per_image]
        records.append({"record": "totals", **self.totals})
        records.append({"record": "ratios", **self.ratios})
        return records

    def format_table(self) -> str:
        qfs = self.header["quality_factors"]
        lines = [
            f"compression report  ({len(self.per_image)} images, "
            f"block {self.header['block_size']}, mode {self.header['mode']})",
            f"{'setting':<14}{'plain bytes':>14}{'encrypted bytes':>18}{'ratio':>10}",
        ]
        for s in ["uncompressed", "png"] + [f"qf{q}" for q in qfs]:
            lines.append(
                f"{s:<14}{self.totals[f'plain_{s}']:>14}"
                f"{self.totals[f'encrypted_{s}']:>18}{self.ratios[s]:>10.4f}"
            )
        return "\n".join(lines)


def compression_report(
    corpus_dir,
    key: MasterKey,
    qf_list: list[int],
    spec: ciph.CipherSpec | None = None,
    center_crop: bool = False,
    threads: int = 1,
) -> CompressionReport:
    """Size plaintext and ciphertext across QFs plus PNG for a whole corpus.

    The default spec is block size 16, per-block keys, all four steps:
    the configuration whose JPEG compatibility the block size guarantees.
    """
    if not qf_list:
        raise UsageError("need at least one quality factor")
    if spec is None:
        spec = ciph.CipherSpec(block_size=16, mode=ciph.Mode.PER_BLOCK)
    paths = list_corpus(corpus_dir)

    def measure(path: Path) -> dict:
        image = _load_corpus_image(path, center_crop, spec.block_size)
        enc = ciph.encrypt(image, key, spec).pixels
        h, w, _ = image.shape
        rec = {
            "path": str(path),
            "width": w,
            "height": h,
            "plain_uncompressed": w * h * blk.CHANNELS,
            "encrypted_uncompressed": w * h * blk.CHANNELS,
            "plain_png": len(png_bytes(image)),
            "encrypted_png": len(png_bytes(enc)),
        }
        for q in qf_list:
            rec[f"plain_qf{q}"] = len(jpeg_bytes(image, q))
            rec[f"encrypted_qf{q}"] = len(jpeg_bytes(enc, q))
        return rec

    per_image = _map_corpus(measure, paths, threads)
    header = _report_header(spec, {"quality_factors": list(qf_list)})
    return CompressionReport(header, per_image)


@dataclass
class SsimReport:
    header: dict
    per_image: list[dict]  # path + score, sorted by path
    summary: dict = field(init=False)

    def __post_init__(self):
        scores = np.array([r["ssim"] for r in self.per_image])
        q1, med, q3 = np.percentile(scores, [25, 50, 75])
        self.summary = {
            "count": int(scores.size),
            "min": float(scores.min()),
            "q1": float(q1),
            "median": float(med),
            "q3": float(q3),
            "max": float(scores.max()),
            "mean": float(scores.mean()),
        }

    def to_records(self) -> list[dict]:
        records = [{"record": "header", **self.header}]
        records += [{"record": "image", **r} for r in self.per_image]
        records.append({"record": "summary", **self.summary})
        return records

    def format_table(self) -> str:
        s = self.summary
        lines = [
            f"leakage report  ({s['count']} plain/ciphertext pairs, "
            f"mode {self.header['mode']})",
            f"{'min':>8}{'Q1':>8}{'median':>8}{'Q3':>8}{'max':>8}{'mean':>8}",
            f"{s['min']:>8.3f}{s['q1']:>8.3f}{s['median']:>8.3f}"
            f"{s['q3']:>8.3f}{s['max']:>8.3f}{s['mean']:>8.3f}",
        ]
        return "\n".join(lines)


def leakage_report(
    corpus_dir,
    key: MasterKey,
    spec: ciph.CipherSpec | None = None,
    center_crop: bool = False,
    threads: int = 1,
) -> SsimReport:
    """SSIM distribution of (plaintext, ciphertext) pairs over a corpus."""
    if spec is None:
        spec = ciph.CipherSpec(block_size=16, mode=ciph.Mode.PER_BLOCK)
    paths = list_corpus(corpus_dir)

    def measure(path: Path) -> dict:
        image = _load_corpus_image(path, center_crop, spec.block_size)
        enc = ciph.encrypt(image, key, spec).pixels
        return {"path": str(path), "ssim": ssim(image, enc)}

    per_image = _map_corpus(measure, paths, threads)
    return SsimReport(_report_header(spec, {}), per_image)


def _map_corpus(fn, paths: list[Path], threads: int) -> list[dict]:
    """Apply fn per path; record order stays sorted regardless of scheduling."""
    if threads <= 1:
        return [fn(p) for p in paths]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = dict(zip(paths, pool.map(fn, paths)))
    return [results[p] for p in paths]
