# Hand oracle for the two-document evaluation fixture. Stems are written out
# by hand (Porter): networks->network, network->network, learning->learn,
# databases->databas, database->databas, quadtree->quadtre, index->index.
import json, math
from fractions import Fraction as F
alpha = 0.5; k = 5
def prf(m, pred, gold):
    p = m / pred if pred else 0.0; r = m / gold
    return 0.0 if p + r == 0 else 2*p*r/(p+r)
def dcg(g): return sum(x / math.log2(r + 2) for r, x in enumerate(g[:k]))
# doc 1: present preds [graph search, neural network], gold present same;
# absent preds [deep learn, quadtre], absent gold [deep learn]
# full list gains: gs 1, dl 1, gs .5, qt 0, nn 1
d1 = dict(ek=prf(2,5,2), em=prf(2,2,2), ak=prf(1,5,1), am=prf(1,2,1),
          nd=dcg([1,1,.5,0,1]) / dcg([1,1,1,.5,0]))
# doc 2: present preds [quadtre index, quadtre], present gold [quadtre];
# absent preds [spatial databas], absent gold same; gains qi 0, sd 1, q 1
d2 = dict(ek=prf(1,5,1), em=prf(1,2,1), ak=prf(1,5,1), am=prf(1,1,1),
          nd=dcg([0,1,1]) / dcg([1,1,0]))
mean = lambda key: (d1[key] + d2[key]) / 2
report = {"dataset": "eval_gold", "documents": 2, "k": 5, "alpha": 0.5,
  "extractive": {"f1_at_k": mean("ek"), "f1_at_m": mean("em"), "evaluated": 2, "skipped": 0},
  "abstractive": {"f1_at_k": mean("ak"), "f1_at_m": mean("am"), "evaluated": 2, "skipped": 0},
  "alpha_ndcg": mean("nd"), "alpha_ndcg_evaluated": 2}
print(json.dumps(report, indent=2))
