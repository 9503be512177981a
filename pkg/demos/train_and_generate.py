"""Train a small wavenet-style model on a synthetic clip and generate audio.

The clip pairs a moving bright square with a soft tone; a couple hundred
optimizer steps are enough to see the loss fall. Artifacts are written to
demo_out/.

    python3 demos/train_and_generate.py
"""

from pathlib import Path

import numpy as np

from foleygen.avio import AlignedAV, AudioBuffer, Dataset, VideoClip
from foleygen.generation import generate, write_wav, write_waveform_csv
from foleygen.models import ModelConfig, build_model
from foleygen.report import plot_waveform
from foleygen.training import TrainConfig, train

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

# -- synthetic clip: 40 frames at 10 fps, 80 samples per frame ---------------
fps, spf, frames = 10, 80, 40
rate = fps * spf
t = np.arange(frames * spf) / rate
tone = 0.4 * np.sin(2 * np.pi * 220 * t)
audio = np.stack([tone, -tone], axis=1)

video = np.zeros((frames, 3, 8, 8))
for f in range(frames):
    video[f, :, (f % 8), :] = 1.0       # a bright bar scanning downward

ds = Dataset(
    av=AlignedAV(audio=AudioBuffer(samples=audio, sample_rate=rate),
                 video=VideoClip(frames=video, frame_rate=fps), spf=spf),
    train_fraction=0.8,
)

cfg = ModelConfig(kind="wavenet", audio_ctx_len=32, video_ctx_len=2, spf=spf,
                  frame_h=8, frame_w=8, embed_channels=2, embed_blocks=1,
                  wn_channels=4, wn_dilations=(1, 2, 4), wn_rounds=1)
model = build_model(cfg, seed=0)
print(f"wavenet model, {model.param_count()} parameters")

report = train(model, ds, TrainConfig(learning_rate=3e-3, steps=300,
                                      batch_size=2, seed=0, loss_kind="mse"))
print(f"loss: {np.mean(report.losses[:10]):.4f} -> "
      f"{np.mean(report.losses[-10:]):.4f}")

generated = generate(model, ds.av.video, total_frames=10)
write_wav(generated, out_dir / "generated.wav")
write_waveform_csv(generated, out_dir / "generated.csv")
plot_waveform(out_dir / "generated.csv", spf, out_dir / "generated.svg",
              sample_rate=rate)
print(f"wrote {len(generated)} samples -> {out_dir}/generated.wav (+csv, svg)")
