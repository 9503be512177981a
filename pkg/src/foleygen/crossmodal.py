"""Video context embedding and the audio<->video shape projections.

The embedder runs a stack of 3D residual blocks over (channels, time, H, W),
mean-pools time, then projects spatial dims to the audio sequence length with
a shared linear layer and video channels to audio channels with a 1x1 mix.
The reverse projection (audio -> video) mirrors it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .engine import Tensor, conv1x1_channels, conv3d, linear
from .errors import ShapeError


def _init(rng, *shape, scale=None):
    fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
    s = scale if scale is not None else 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.standard_normal(shape) * s, requires_grad=True)


@dataclass
class ResBlock3DParams:
    """Two 3x3x3 conv kernels plus an optional 1x1 skip projection."""
    conv1: Tensor  # (c_out, c_in, 3, 3, 3)
    conv2: Tensor  # (c_out, c_out, 3, 3, 3)
    proj: Tensor | None = None  # (c_out, c_in) when channel counts differ

    @staticmethod
    def create(rng, c_in: int, c_out: int) -> "ResBlock3DParams":
        proj = None if c_in == c_out else _init(rng, c_out, c_in)
        return ResBlock3DParams(
            conv1=_init(rng, c_out, c_in, 3, 3, 3),
            conv2=_init(rng, c_out, c_out, 3, 3, 3),
            proj=proj,
        )

    def tensors(self, prefix: str) -> dict:
        out = {f"{prefix}.conv1": self.conv1, f"{prefix}.conv2": self.conv2}
        if self.proj is not None:
            out[f"{prefix}.proj"] = self.proj
        return out


@dataclass
class ProjectionParams:
    """Shared spatial linear map plus a 1x1 channel mix."""
    w: Tensor      # (in_len, out_len)
    b: Tensor      # (out_len,)
    mix: Tensor    # (c_out, c_in)

    @staticmethod
    def create(rng, in_len: int, out_len: int, c_in: int, c_out: int):
        return ProjectionParams(
            w=_init(rng, in_len, out_len),
            b=Tensor(np.zeros(out_len), requires_grad=True),
            mix=_init(rng, c_out, c_in),
        )

    def tensors(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b,
                f"{prefix}.mix": self.mix}


@dataclass
class VideoEmbedderParams:
    """Entry channel lift, residual stack, and the video->audio projection."""
    entry: Tensor                      # (c_int, 3) channel lift
    blocks: list = field(default_factory=list)
    proj: ProjectionParams = None      # (H*W) -> n_aud, c_int -> 2

    @staticmethod
    def create(rng, h: int, w: int, n_aud: int, channels: int = 8,
               n_blocks: int = 2, c_in: int = 3, c_aud: int = 2):
        return VideoEmbedderParams(
            entry=_init(rng, channels, c_in),
            blocks=[ResBlock3DParams.create(rng, channels, channels)
                    for _ in range(n_blocks)],
            proj=ProjectionParams.create(rng, h * w, n_aud, channels, c_aud),
        )

    def tensors(self, prefix: str = "embed") -> dict:
        out = {f"{prefix}.entry": self.entry}
        for i, blk in enumerate(self.blocks):
            out.update(blk.tensors(f"{prefix}.block{i}"))
        out.update(self.proj.tensors(f"{prefix}.proj"))
        return out


def res_block_3d(x: Tensor, p: ResBlock3DParams) -> Tensor:
    """y = relu(conv2(relu(conv1(x))) + skip(x)); both convs pad 1, stride 1."""
    h = conv3d(x, p.conv1, stride=(1, 1, 1), padding=(1, 1, 1)).relu()
    h = conv3d(h, p.conv2, stride=(1, 1, 1), padding=(1, 1, 1))
    skip = x if p.proj is None else conv1x1_channels(x, p.proj)
    return (h + skip).relu()


def video_to_audio(v: Tensor, p: ProjectionParams) -> Tensor:
    """(c_vid, H, W) or (c_vid, T, H, W) -> (c_aud, n_aud).

    A 4-D input is mean-pooled over time first. Spatial dims are flattened
    and mapped by the shared linear layer, then channels are mixed 1x1.
    """
    if v.data.ndim == 4:
        v = v.mean_axis(1)
    if v.data.ndim != 3:
        raise ShapeError(f"video_to_audio: expected 3-D or 4-D, got {v.shape}")
    c, h, w = v.shape
    if h * w != p.w.shape[0]:
        raise ShapeError(
            f"video_to_audio: spatial size {h}x{w} does not match "
            f"projection input {p.w.shape[0]}"
        )
    flat = v.reshape(c, h * w)
    seq = linear(flat, p.w, p.b)            # (c, n_aud)
    return conv1x1_channels(seq, p.mix)     # (c_aud, n_aud)


def audio_to_video(a: Tensor, p: ProjectionParams, h: int, w: int) -> Tensor:
    """(c_aud, n_aud) -> (c_vid, H, W) via linear n_aud -> H*W and 1x1 mix."""
    if a.data.ndim != 2:
        raise ShapeError(f"audio_to_video: expected 2-D, got {a.shape}")
    if a.shape[1] != p.w.shape[0]:
        raise ShapeError(
            f"audio_to_video: sequence length {a.shape[1]} does not match "
            f"projection input {p.w.shape[0]}"
        )
    if p.w.shape[1] != h * w:
        raise ShapeError(
            f"audio_to_video: projection output {p.w.shape[1]} != {h}x{w}"
        )
    flat = linear(a, p.w, p.b)              # (c_aud, H*W)
    mixed = conv1x1_channels(flat, p.mix)   # (c_vid, H*W)
    return mixed.reshape(p.mix.shape[0], h, w)


def embed_video_context(frames: Tensor, p: VideoEmbedderParams) -> Tensor:
    """(3, n, H, W) -> (2, n_aud): residual stack, time mean-pool, projection."""
    if frames.data.ndim != 4:
        raise ShapeError(f"embed_video_context: expected 4-D, got {frames.shape}")
    x = conv1x1_channels(frames, p.entry)
    for blk in p.blocks:
        x = res_block_3d(x, blk)
    pooled = x.mean_axis(1)                 # (c_int, H, W)
    return video_to_audio(pooled, p.proj)
