"""Score a predicted grade mask against ground truth, pixel by pixel and per segment."""

import numpy as np

from roadgrade.metrics import evaluate

gt = np.zeros((40, 40), np.uint8)
gt[5:9, :] = 3        # a high-grade avenue
gt[9:, 18:21] = 1     # a low-grade side street

pred = gt.copy()
pred[9:25, 18:21] = 2  # half of the side street is called medium
pred[30:, 5:7] = 1     # a false road nobody drew

report = evaluate(pred, gt)
print(f"overall accuracy {report.oa:.3f}, mIoU {report.miou:.3f}, kappa {report.kappa:.3f}")
for c in report.per_class:
    iou = "n/a" if c.iou is None else f"{c.iou:.3f}"
    print(f"  {c.name:10s} support {c.support:4d}  IoU {iou}")
print(f"segment accuracy {report.segacc:.3f}")
for m in report.segments:
    print(f"  predicted {m.pred_grade} ({m.size} px) matched {m.gt_grade} by {m.how}: {'ok' if m.correct else 'wrong'}")
