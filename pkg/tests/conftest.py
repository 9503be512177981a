import numpy as np
import pytest

from foleygen import engine
from foleygen.avio import AlignedAV, AudioBuffer, Dataset, VideoClip
from foleygen.models import ModelConfig


@pytest.fixture(autouse=True)
def float64_precision():
    engine.set_precision("float64")
    yield
    engine.set_precision("float64")


def tiny_config(kind: str, **overrides) -> ModelConfig:
    """Sub-5k-parameter configurations used across the test modules."""
    base = dict(
        audio_ctx_len=16, video_ctx_len=2, spf=4, frame_h=4, frame_w=4,
        embed_channels=2, embed_blocks=1,
    )
    if kind == "wavenet":
        base.update(wn_channels=3, wn_dilations=(1, 2), wn_rounds=1)
    elif kind == "transformer":
        base.update(d_model=8, heads=2, tf_blocks=1, ff_hidden=16,
                    strided_schedule=(2, 2), pos_table_len=32)
    elif kind == "deep_fusion":
        base.update(fusion_video_channels=2, fusion_blocks=2)
    base.update(overrides)
    return ModelConfig(kind=kind, **base)


def make_dataset(frames=12, spf=4, h=4, w=4, fps=5, seed=0,
                 train_fraction=0.75, audio=None, video=None) -> Dataset:
    rng = np.random.default_rng(seed)
    if audio is None:
        audio = rng.uniform(-0.9, 0.9, (frames * spf, 2))
    if video is None:
        video = rng.uniform(0, 1, (frames, 3, h, w))
    av = AlignedAV(
        audio=AudioBuffer(samples=audio, sample_rate=fps * spf),
        video=VideoClip(frames=video, frame_rate=fps),
        spf=spf,
    )
    return Dataset(av=av, train_fraction=train_fraction)
