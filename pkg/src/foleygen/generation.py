"""Autoregressive audio generation with a frozen per-frame video context.

The rolling audio context contains only previously generated samples, never
ground truth. Sample-mode models recompute the video embedding exactly once
per frame and reuse it for that frame's spf steps.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .avio import AudioBuffer, VideoClip
from .engine import Tensor
from .errors import ContractError, FormatError, RangeError
from .models import Model, dequantize


def generate(model: Model, video: VideoClip, total_frames: int | None = None) -> AudioBuffer:
    """Generate audio for a clip; output length is total_frames * spf."""
    cfg = model.config
    frames = video.frame_count if total_frames is None else total_frames
    if frames < 1:
        raise ContractError("need at least one frame to generate for")
    if frames > video.frame_count:
        raise ContractError(
            f"requested {frames} frames but clip has {video.frame_count}"
        )
    spf = cfg.spf
    A, n = cfg.audio_ctx_len, cfg.video_ctx_len
    out = np.zeros((frames * spf, 2), dtype=np.float64)

    def video_ctx(frame_index):
        ctx = np.zeros((n,) + video.frames.shape[1:], dtype=np.float64)
        lo = max(0, frame_index - n + 1)
        ctx[n - (frame_index + 1 - lo):] = video.frames[lo: frame_index + 1]
        return ctx

    def audio_ctx(pos):
        ctx = np.zeros((A, 2), dtype=np.float64)
        lo = max(0, pos - A)
        if pos > 0:
            ctx[A - (pos - lo):] = out[lo:pos]
        return ctx

    if model.mode == "sequence":
        for f in range(frames):
            a = Tensor(audio_ctx(f * spf).T)
            v = Tensor(video_ctx(f).transpose(1, 0, 2, 3))
            from .models import deep_fusion_forward  # local to avoid cycle noise
            seg = deep_fusion_forward(a, v, model.p)
            out[f * spf:(f + 1) * spf] = seg.data.T
    else:
        for f in range(frames):
            embed = model.embed(video_ctx(f))
            for off in range(spf):
                pos = f * spf + off
                a = Tensor(audio_ctx(pos).T)
                y = model.forward_core(a, embed)
                if cfg.quantized:
                    bins = np.argmax(y.data, axis=1)
                    out[pos] = [dequantize(int(b)) for b in bins]
                else:
                    out[pos] = y.data
    out = np.clip(out, -1.0, 1.0)
    return AudioBuffer(samples=out, sample_rate=video.frame_rate * spf)


# -- WAV output ---------------------------------------------------------------


def write_wav(a: AudioBuffer, path) -> None:
    """Write 16-bit PCM stereo WAV; sample s encodes as round(s * 32767)."""
    pcm = np.rint(a.samples * 32767.0).astype("<i2")
    data = pcm.tobytes()
    hdr = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, 1, 2, a.sample_rate, a.sample_rate * 4, 4, 16,
        b"data", len(data),
    )
    with open(path, "wb") as f:
        f.write(hdr)
        f.write(data)


def write_waveform_csv(a: AudioBuffer, path) -> None:
    """Dump the raw waveform as CSV rows (index, left, right)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "left", "right"])
        for i, (l, r) in enumerate(a.samples):
            w.writerow([i, repr(float(l)), repr(float(r))])


# -- diagnostics --------------------------------------------------------------


def frame_boundary_discontinuity(a: AudioBuffer, spf: int) -> float:
    """Ratio of frame-boundary jumps to overall sample-to-sample movement.

    score = mean_k |x[k*spf] - x[k*spf-1]| / (mean_t |x[t] - x[t-1]| + 1e-12)
    over both channels. A score near 1 means boundaries are no rougher than
    the rest of the signal; large scores flag the per-frame stitching artifact.
    """
    x = a.samples
    if len(x) % spf != 0:
        raise ContractError(f"length {len(x)} not divisible by spf {spf}")
    frames = len(x) // spf
    if frames < 2:
        raise ContractError("need at least 2 frames to measure boundaries")
    diffs = np.abs(np.diff(x, axis=0))                 # (N-1, 2)
    boundary_idx = np.arange(1, frames) * spf - 1      # diff x[k*spf]-x[k*spf-1]
    boundary = diffs[boundary_idx].mean()
    overall = diffs.mean()
    return float(boundary / (overall + 1e-12))
