"""
Random forests on radiomics and on fused features
=================================================

Two forests are trained on the same synthetic images. One sees the eight
handcrafted features only. The other sees the CNN embedding concatenated
with them. Impurity-based importances show which inputs each one relies on.
"""

# %%
import numpy as np

from vbiopsy.fixtures import CLASS_NAMES, make_image
from vbiopsy.forest import ForestConfig, fit_forest, fuse, fused_feature_names
from vbiopsy.ingest import make_rng, normalize
from vbiopsy.metrics import class_report, confusion
from vbiopsy.microcnn import MicroCnn, TrainConfig, extract_embedding, train
from vbiopsy.radiomics import FEATURE_NAMES, extract_radiomics


def sample(n, seed):
    images, labels = [], []
    for cls, name in enumerate(CLASS_NAMES):
        for i in range(n):
            images.append(normalize(make_image(name, make_rng(seed, 101, cls, i), 32)))
            labels.append(cls)
    return np.stack(images), np.array(labels)


x_train, y_train = sample(30, 0)
x_val, y_val = sample(10, 1)

# %%
# Radiomics-only forest.
r_train = np.array([extract_radiomics(x).as_array() for x in x_train])
r_val = np.array([extract_radiomics(x).as_array() for x in x_val])
radiomics_forest = fit_forest(r_train, y_train, ForestConfig(n_trees=50, seed=0),
                              feature_names=FEATURE_NAMES)

# %%
# Fusion forest: a briefly trained CNN supplies a 32-value embedding, and
# it is placed in front of the radiomics vector.
cnn = MicroCnn.init(0)
train(cnn, x_train, y_train, TrainConfig(learning_rate=1e-2, epochs=3))
f_train = np.array([fuse(extract_embedding(cnn, x), r) for x, r in zip(x_train, r_train)])
f_val = np.array([fuse(extract_embedding(cnn, x), r) for x, r in zip(x_val, r_val)])
fusion_forest = fit_forest(f_train, y_train, ForestConfig(n_trees=50, seed=0),
                           feature_names=fused_feature_names(cnn.embedding_dim))

# %%
for name, forest, X in (("radiomics", radiomics_forest, r_val), ("fusion", fusion_forest, f_val)):
    rep = class_report(confusion(y_val, forest.predict(X), 4))
    print(f"{name:9s} accuracy {rep.accuracy:.3f}  macro-F1 {rep.macro_f1:.3f}")

# %%
# The five most important inputs of each forest. Importances sum to 1.
for forest in (radiomics_forest, fusion_forest):
    order = np.argsort(forest.feature_importances)[::-1][:5]
    print(", ".join(f"{forest.feature_names[i]}={forest.feature_importances[i]:.2f}"
                    for i in order))
