"""
Classification metrics and one-vs-rest ROC
===========================================

A hand-sized example of the report produced for each trained model.
"""

# %%
import numpy as np

from vbiopsy.metrics import class_report, confusion, dumps_report, evaluate, roc_ovr

# %%
# Four samples, four classes, one mistake. Class 3 never occurs, so its F1
# is 0/0, which counts as 0, and it still enters the macro average.
y_true, y_pred = [0, 0, 1, 2], [0, 1, 1, 2]
print(confusion(y_true, y_pred, 4))
rep = class_report(confusion(y_true, y_pred, 4))
print(f"per-class F1 {np.round(rep.f1, 4).tolist()}, macro {rep.macro_f1:.5f} (7/12), "
      f"accuracy {rep.accuracy}")

# %%
# ROC for one class. Positives score {0.9, 0.4} and negatives {0.8, 0.1}.
# Three of the four positive/negative pairs are ordered correctly, so the AUC is 3/4.
roc = roc_ovr([1, 1, 0, 0], [0.9, 0.4, 0.8, 0.1], 1)
print("ROC points", roc.points, "AUC", roc.auc)

# %%
# The JSON report ties these together. AUC for a class with no positives
# is reported as null rather than 0.
scores = np.array([[0.7, 0.1, 0.1, 0.1], [0.4, 0.5, 0.05, 0.05],
                   [0.1, 0.8, 0.05, 0.05], [0.0, 0.1, 0.9, 0.0]])
print(dumps_report(evaluate(y_true, y_pred, 4, scores, model_id="demo", split="validation")))
