"""Edit-distance OCR scoring and an optional external OCR hook."""

from __future__ import annotations

import os
import shlex
import subprocess
from dataclasses import asdict, dataclass

import numpy as np

OCR_ENV_VAR = "DEBLUR_FORGE_OCR_CMD"
OCR_TIMEOUT = 60.0


class OcrError(RuntimeError):
    """The external OCR command failed or timed out."""


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode code points (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class OcrScore:
    distance: int
    gt_len: int
    ocr_len: int
    score: float

    def to_dict(self) -> dict:
        return asdict(self)


def ocr_score(ground_truth: str, recognized: str) -> OcrScore:
    """Similarity in [0, 100] after collapsing whitespace runs."""
    gt = normalize_whitespace(ground_truth)
    rec = normalize_whitespace(recognized)
    dist = levenshtein(gt, rec)
    denom = max(len(gt), len(rec), 1)
    return OcrScore(dist, len(gt), len(rec), 100.0 * (1.0 - dist / denom))


def ocr_command() -> str | None:
    cmd = os.environ.get(OCR_ENV_VAR, "").strip()
    return cmd or None


def run_external_ocr(image_path, engine_command: str | None = None, timeout: float = OCR_TIMEOUT) -> str | None:
    """Run the configured OCR command on ``image_path`` and return its stdout.

    ``{input}`` in the command is replaced by the image path. Returns ``None``
    when no command is configured (argument or environment variable).
    """
    cmd = engine_command if engine_command is not None else ocr_command()
    if not cmd:
        return None
    argv = [tok.replace("{input}", str(image_path)) for tok in shlex.split(cmd)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise OcrError(f"OCR command timed out after {timeout:g} s: {cmd}") from exc
    except OSError as exc:
        raise OcrError(f"cannot run OCR command {argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        raise OcrError(f"OCR command exited with status {proc.returncode}: {proc.stderr.strip()}")
    return proc.stdout.strip()


def psnr(estimate, reference, border: int = 0, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, ignoring ``border`` pixels on each side."""
    a = np.asarray(estimate, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if border:
        a = a[border:-border, border:-border]
        b = b[border:-border, border:-border]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
