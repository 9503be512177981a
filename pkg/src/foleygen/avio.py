"""Audio/video loading, downsampling, and temporal alignment.

Ingestion formats are deliberately codec-free: RIFF WAV for audio and a
JSON manifest pointing at a raw interleaved RGB8 frame file for video.
A one-line ffmpeg transcode produces both from any source container:

    ffmpeg -i in.mp4 -vn -acodec pcm_s16le out.wav
    ffmpeg -i in.mp4 -f rawvideo -pix_fmt rgb24 frames.rgb
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import (
    AlignmentError,
    BoundsError,
    FormatError,
    ParameterError,
    UnsupportedError,
)


@dataclass
class AudioBuffer:
    """Two-channel amplitude sequence in [-1, 1] plus its sample rate."""
    samples: np.ndarray  # (N, 2) float64
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] != 2:
            raise FormatError(
                f"audio samples must be (N, 2), got {self.samples.shape}"
            )
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")
        if self.samples.size and (
            self.samples.min() < -1.0 or self.samples.max() > 1.0
        ):
            raise FormatError("audio amplitudes must lie in [-1, 1]")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class VideoClip:
    """Frame sequence (F, 3, H, W) with values in [0, 1] plus frame rate."""
    frames: np.ndarray
    frame_rate: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or self.frames.shape[1] != 3:
            raise FormatError(
                f"video frames must be (F, 3, H, W), got {self.frames.shape}"
            )
        if self.frames.shape[0] < 1:
            raise FormatError("video must contain at least one frame")
        if self.frame_rate <= 0:
            raise ParameterError("frame_rate must be positive")
        if self.frames.min() < 0.0 or self.frames.max() > 1.0:
            raise FormatError("pixel values must lie in [0, 1]")

    @property
    def frame_count(self):
        return self.frames.shape[0]


@dataclass
class AlignedAV:
    """Audio and video cut so that frame_count * spf == audio length exactly."""
    audio: AudioBuffer
    video: VideoClip
    spf: int

    def __post_init__(self):
        if self.audio.sample_rate != self.video.frame_rate * self.spf:
            raise AlignmentError(
                f"spf {self.spf} inconsistent with rates "
                f"{self.audio.sample_rate}/{self.video.frame_rate}"
            )
        if len(self.audio) % self.spf != 0:
            raise AlignmentError("audio length is not a multiple of spf")
        if self.video.frame_count * self.spf != len(self.audio):
            raise AlignmentError(
                f"{self.video.frame_count} frames x spf {self.spf} "
                f"!= {len(self.audio)} samples"
            )


@dataclass
class ContextWindow:
    """Zero-padded (audio context, video context, target) for one step."""
    audio_ctx: np.ndarray   # (A, 2)
    video_ctx: np.ndarray   # (n, 3, H, W)
    target: np.ndarray      # (2,) or (spf, 2)
    frame_index: int


# -- WAV --------------------------------------------------------------------


def load_wav(path) -> AudioBuffer:
    """Read a RIFF WAV file: PCM 16-bit or IEEE-float 32-bit, 1-2 channels.

    Mono is duplicated to two channels; 16-bit PCM is scaled by 1/32768.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (csize,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8: pos + 8 + csize]
        if cid == b"fmt ":
            if csize < 16:
                raise FormatError(f"{path}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
        pos += 8 + csize + (csize & 1)
    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedError(f"{path}: {channels} channels not supported")
    if audio_format == 1 and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedError(
            f"{path}: format tag {audio_format} / {bits}-bit not supported"
        )
    if x.size % channels != 0:
        raise FormatError(f"{path}: data chunk not a whole number of frames")
    x = x.reshape(-1, channels)
    if channels == 1:
        x = np.repeat(x, 2, axis=1)
    x = np.clip(x, -1.0, 1.0)
    return AudioBuffer(samples=x, sample_rate=rate)


# -- raw-RGB clip manifest ---------------------------------------------------


def load_clip(manifest_path) -> VideoClip:
    """Read a clip manifest (JSON) and its raw RGB8 frame file.

    Manifest fields: frames_file, width, height, frame_count, frame_rate.
    frames_file is interleaved RGB8, frame-major, resolved relative to the
    manifest's directory.
    """
    mpath = Path(manifest_path)
    try:
        meta = json.loads(mpath.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{manifest_path}: unreadable manifest ({e})") from e
    for field in ("frames_file", "width", "height", "frame_count", "frame_rate"):
        if field not in meta:
            raise FormatError(f"{manifest_path}: missing field {field!r}")
    f, h, w = int(meta["frame_count"]), int(meta["height"]), int(meta["width"])
    raw = (mpath.parent / meta["frames_file"]).read_bytes()
    expected = f * 3 * h * w
    if len(raw) != expected:
        raise FormatError(
            f"{meta['frames_file']}: {len(raw)} bytes, expected {expected} "
            f"for frame_count={f} {w}x{h}"
        )
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(f, h, w, 3)
    frames = arr.transpose(0, 3, 1, 2).astype(np.float64) / 255.0
    return VideoClip(frames=frames, frame_rate=int(meta["frame_rate"]))


# -- resampling --------------------------------------------------------------


def downsample_audio(a: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Integer-factor decimation after a 4th-order low-pass at 0.45*target.

    The IIR filter runs forward only, so the output preserves DC but is not
    zero-phase. Decimation keeps every ``factor``-th sample starting at 0.
    """
    if target_rate <= 0 or a.sample_rate % target_rate != 0:
        raise ParameterError(
            f"target rate {target_rate} does not divide sample rate "
            f"{a.sample_rate}"
        )
    factor = a.sample_rate // target_rate
    if factor == 1:
        return AudioBuffer(samples=a.samples.copy(), sample_rate=a.sample_rate)
    wn = 0.45 * target_rate / (a.sample_rate / 2.0)
    b, coef_a = signal.butter(4, wn)
    filtered = signal.lfilter(b, coef_a, a.samples, axis=0)
    out = np.clip(filtered[::factor], -1.0, 1.0)
    return AudioBuffer(samples=out, sample_rate=target_rate)


def resize_frames(v: VideoClip, h: int, w: int) -> VideoClip:
    """Bilinear per-frame resize with half-pixel sample centers."""
    if h < 1 or w < 1:
        raise ParameterError("target size must be >= 1 in both dimensions")
    f, c, hi, wi = v.frames.shape
    if (hi, wi) == (h, w):
        return VideoClip(frames=v.frames.copy(), frame_rate=v.frame_rate)

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        t = src - i0
        return i0, i1, t

    y0, y1, ty = axis_weights(hi, h)
    x0, x1, tx = axis_weights(wi, w)
    fr = v.frames
    top = fr[:, :, y0][:, :, :, x0] * (1 - tx) + fr[:, :, y0][:, :, :, x1] * tx
    bot = fr[:, :, y1][:, :, :, x0] * (1 - tx) + fr[:, :, y1][:, :, :, x1] * tx
    out = top * (1 - ty[:, None]) + bot * ty[:, None]
    return VideoClip(frames=np.clip(out, 0.0, 1.0), frame_rate=v.frame_rate)


# -- alignment ---------------------------------------------------------------


def align(a: AudioBuffer, v: VideoClip) -> AlignedAV:
    """Cut audio and video to an exact integer samples-per-frame relation.

    Audio is truncated to a multiple of spf, video to the matching frame
    count; both truncations drop the tail and keep the prefix unchanged.
    """
    if a.sample_rate % v.frame_rate != 0:
        raise AlignmentError(
            f"sample rate {a.sample_rate} not divisible by frame rate "
            f"{v.frame_rate}"
        )
    spf = a.sample_rate // v.frame_rate
    clipped_len = len(a) - (len(a) % spf)
    frames_needed = clipped_len // spf
    if frames_needed > v.frame_count:
        raise AlignmentError(
            f"audio needs {frames_needed} frames but clip has {v.frame_count}"
        )
    audio = AudioBuffer(samples=a.samples[:clipped_len], sample_rate=a.sample_rate)
    video = VideoClip(frames=v.frames[:frames_needed], frame_rate=v.frame_rate)
    return AlignedAV(audio=audio, video=video, spf=spf)


def sample_window(d: AlignedAV, frame_index: int, audio_ctx_len: int,
                  video_ctx_len: int, target_kind: str = "sample",
                  sample_offset: int = 0) -> ContextWindow:
    """Cut one zero-padded training/generation window out of an aligned pair.

    The audio context holds the ``audio_ctx_len`` samples immediately before
    the target position; the video context holds frames
    [frame_index - n + 1 .. frame_index]. Missing history is zero padding.
    """
    F = d.video.frame_count
    if not 0 <= frame_index < F:
        raise BoundsError(f"frame_index {frame_index} out of range [0, {F})")
    if target_kind not in ("sample", "frame_sequence"):
        raise ParameterError(f"unknown target kind {target_kind!r}")
    if target_kind == "sample":
        if not 0 <= sample_offset < d.spf:
            raise BoundsError(
                f"sample_offset {sample_offset} out of range [0, {d.spf})"
            )
        pos = frame_index * d.spf + sample_offset
        target = d.audio.samples[pos].copy()
    else:
        pos = frame_index * d.spf
        target = d.audio.samples[pos: pos + d.spf].copy()

    A = audio_ctx_len
    audio_ctx = np.zeros((A, 2), dtype=np.float64)
    lo = max(0, pos - A)
    if pos > 0:
        audio_ctx[A - (pos - lo):] = d.audio.samples[lo:pos]

    n = video_ctx_len
    _, c, h, w = d.video.frames.shape
    video_ctx = np.zeros((n, c, h, w), dtype=np.float64)
    first = frame_index - n + 1
    vlo = max(0, first)
    video_ctx[n - (frame_index + 1 - vlo):] = d.video.frames[vlo: frame_index + 1]
    return ContextWindow(audio_ctx=audio_ctx, video_ctx=video_ctx,
                         target=target, frame_index=frame_index)


# -- dataset container -------------------------------------------------------

_DS_MAGIC = b"FGDS"
_DS_VERSION = 1


@dataclass
class Dataset:
    """An aligned pair plus its time-ordered train/validation split."""
    av: AlignedAV
    train_fraction: float

    @property
    def split_frame(self) -> int:
        return int(self.av.video.frame_count * self.train_fraction)

    def train_frames(self) -> range:
        return range(0, self.split_frame)

    def val_frames(self) -> range:
        return range(self.split_frame, self.av.video.frame_count)


def save_dataset(ds: Dataset, path) -> None:
    """Write the dataset intermediate: binary header + aligned arrays."""
    a = ds.av.audio
    v = ds.av.video
    frames_u8 = np.round(v.frames * 255.0).astype(np.uint8)
    audio_f32 = a.samples.astype("<f4")
    header = struct.pack(
        "<4sIIIIIIId",
        _DS_MAGIC, _DS_VERSION,
        a.sample_rate, v.frame_rate, ds.av.spf,
        v.frame_count, v.frames.shape[2], v.frames.shape[3],
        ds.train_fraction,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(audio_f32.tobytes())
        f.write(frames_u8.tobytes())


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    hsize = struct.calcsize("<4sIIIIIIId")
    if len(raw) < hsize:
        raise FormatError(f"{path}: truncated dataset header")
    magic, version, rate, fps, spf, F, H, W, frac = struct.unpack_from(
        "<4sIIIIIIId", raw, 0
    )
    if magic != _DS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _DS_VERSION:
        raise UnsupportedError(f"{path}: dataset version {version}")
    n_samples = F * spf
    audio_bytes = n_samples * 2 * 4
    frame_bytes = F * 3 * H * W
    if len(raw) != hsize + audio_bytes + frame_bytes:
        raise FormatError(
            f"{path}: size {len(raw)} != expected {hsize + audio_bytes + frame_bytes}"
        )
    audio = np.frombuffer(raw, dtype="<f4", count=n_samples * 2,
                          offset=hsize).reshape(-1, 2).astype(np.float64)
    frames = np.frombuffer(raw, dtype=np.uint8, count=frame_bytes,
                           offset=hsize + audio_bytes)
    frames = frames.reshape(F, 3, H, W).astype(np.float64) / 255.0
    av = AlignedAV(
        audio=AudioBuffer(samples=np.clip(audio, -1, 1), sample_rate=rate),
        video=VideoClip(frames=frames, frame_rate=fps),
        spf=spf,
    )
    return Dataset(av=av, train_fraction=frac)


def ingest(paired_manifest_path, target_rate: int = 8820,
           height: int = 36, width: int = 64) -> Dataset:
    """Run the full pipeline on a paired-clip manifest.

    Manifest fields: clip_manifest, wav_path, train_fraction. Paths resolve
    relative to the manifest's directory.
    """
    mpath = Path(paired_manifest_path)
    try:
        meta = json.loads(mpath.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{paired_manifest_path}: unreadable manifest ({e})") from e
    for field in ("clip_manifest", "wav_path", "train_fraction"):
        if field not in meta:
            raise FormatError(f"{paired_manifest_path}: missing field {field!r}")
    audio = load_wav(mpath.parent / meta["wav_path"])
    video = load_clip(mpath.parent / meta["clip_manifest"])
    audio = downsample_audio(audio, target_rate)
    video = resize_frames(video, height, width)
    av = align(audio, video)
    return Dataset(av=av, train_fraction=float(meta["train_fraction"]))
