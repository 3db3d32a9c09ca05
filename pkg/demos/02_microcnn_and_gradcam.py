"""
Training the small CNN and explaining it with Grad-CAM
======================================================

The synthetic four-class set (bright ellipse, dark ellipse, empty,
stripes) is generated in memory, a three-block CNN is trained for three
epochs with Adam, and Grad-CAM shows where the network looked.
"""

# %%
import numpy as np

from vbiopsy.fixtures import CLASS_NAMES, make_image
from vbiopsy.ingest import make_rng, normalize
from vbiopsy.microcnn import MicroCnn, TrainConfig, grad_cam, train

# %%
# 40 training and 12 held-out images per class, 32x32 to keep this quick.
def sample(n, seed):
    images, labels = [], []
    for cls, name in enumerate(CLASS_NAMES):
        for i in range(n):
            images.append(normalize(make_image(name, make_rng(seed, 101, cls, i), 32)))
            labels.append(cls)
    return np.stack(images), np.array(labels)


x_train, y_train = sample(40, 0)
x_val, y_val = sample(12, 1)

# %%
# A learning rate of 1e-2 suits a network trained from scratch on a few
# hundred images. The Adam default of 1e-4 assumes a pretrained start.
model = MicroCnn.init(seed=0)
log = train(model, x_train, y_train, TrainConfig(learning_rate=1e-2, epochs=3),
            x_val, y_val)
for epoch, (loss, acc) in enumerate(zip(log.epoch_loss, log.validation_accuracy), 1):
    print(f"epoch {epoch}: loss {loss:.3f}, validation accuracy {acc:.3f}")

# %%
# Grad-CAM for one bright-ellipse image. The channel weights are the
# spatial means of d(logit)/d(activation). The raw map lives on the 4x4
# grid of the last block and is upsampled to 32x32.
img = x_val[0]
pred = int(model.predict(img)[0])
cam = grad_cam(model, img, pred)
print(f"predicted {CLASS_NAMES[pred]}; raw map\n{np.round(cam.raw, 3)}")

# %%
# Where is the heat? Compare it with the brightest part of the image.
hot = tuple(int(v) for v in np.unravel_index(np.argmax(cam.upsampled), cam.upsampled.shape))
print(f"hottest pixel {hot}, image value there {img[hot]:.2f} "
      f"(image mean {img.mean():.2f})")
