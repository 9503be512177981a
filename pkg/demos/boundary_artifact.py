"""Measure the frame-boundary discontinuity artifact of sequence-mode output.

A model that emits one whole frame of audio per step tends to stitch the
frames together with visible amplitude jumps at the seams. The metric below
compares boundary jumps against overall sample-to-sample movement: ~1 for
smooth audio, large for stitched audio.

    python3 demos/boundary_artifact.py
"""

import numpy as np

from foleygen.avio import AudioBuffer, VideoClip
from foleygen.generation import frame_boundary_discontinuity, generate
from foleygen.models import ModelConfig, build_model

spf, frames = 100, 40
n = spf * frames

# A smooth sine crosses frame boundaries like any other pair of samples.
t = np.arange(n)
sine = 0.5 * np.sin(2 * np.pi * t / 400.0)
buf = AudioBuffer(samples=np.stack([sine, sine], axis=1), sample_rate=1000)
print(f"smooth sine:      {frame_boundary_discontinuity(buf, spf):.3f}")

# The same signal with a level shift at every boundary scores far higher.
shifted = np.clip(sine + 0.0, -1, 1)
for k in range(1, frames):
    shifted[k * spf:] += 0.3 * (-1.0) ** k
shifted = np.clip(shifted, -1, 1)
buf = AudioBuffer(samples=np.stack([shifted] * 2, axis=1), sample_rate=1000)
print(f"boundary jumps:   {frame_boundary_discontinuity(buf, spf):.3f}")

# The metric applied to a sequence-mode (deep fusion) generation, where
# each frame's 2 x spf segment is produced in one shot.
cfg = ModelConfig(kind="deep_fusion", audio_ctx_len=16, video_ctx_len=2,
                  spf=spf, frame_h=4, frame_w=4, embed_channels=2,
                  embed_blocks=1, fusion_video_channels=2)
model = build_model(cfg, seed=1)
rng = np.random.default_rng(1)
clip = VideoClip(frames=rng.uniform(0, 1, (8, 3, 4, 4)), frame_rate=10)
generated = generate(model, clip)
score = frame_boundary_discontinuity(generated, spf)
print(f"deep fusion gen:  {score:.3f}")
