"""
Overfitting a handful of synthetic blobs
==========================================

Eight 64x64 textured images, each with one tinted ellipse. Full-batch Adam at lr 1e-4
until the training Dice reaches 0.95. Takes about half a minute on one core.

Usage: python3 demos/03_train_blobs.py [output-dir]
"""

import sys
from pathlib import Path

import numpy as np

from caranet import CaraNet, ModelConfig, checkpoint
from caranet.data import make_blob_dataset, write_gray, write_rgb
from caranet.train import TrainConfig, Trainer, train_until

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/blobs")
out.mkdir(parents=True, exist_ok=True)

data = make_blob_dataset(8, 64, seed=0)
print("foreground fraction per image:", [round(float(m.mean()), 3) for _, _, m in data])

model = CaraNet(ModelConfig(), seed=0)
print("parameters:", sum(p.size for p in model.parameters()))

trainer = Trainer(model, TrainConfig(scales=(1.0,), batch_size=8, input_size=64, lr=1e-4))
losses, dice = train_until(trainer, data, target_dice=0.95, max_steps=500)
print("steps %d, final loss %.4f, training Dice %.3f" % (len(losses), losses[-1], dice))

# loss every 10 steps
for step in range(0, len(losses), 10):
    print("  step %3d  loss %.4f" % (step + 1, losses[step]))

# save images, masks and predictions side by side
for key, img, mask in data[:3]:
    write_rgb(out / f"{key}_image.png", img)
    write_gray(out / f"{key}_mask.png", mask.astype(float))
    write_gray(out / f"{key}_pred.png", model.predict(img))

ckpt = checkpoint.Checkpoint.from_model(model, trainer.optimizer.state)
checkpoint.save(out / "blobs.ckpt", ckpt)
restored = checkpoint.load(out / "blobs.ckpt").build_model()
print("restored model agrees:", np.array_equal(restored.predict(data[0][1]), model.predict(data[0][1])))
print("wrote", out)
