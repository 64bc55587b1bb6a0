"""Deletion / insertion faithfulness on the planted task.

If the importance ranking is faithful, deleting concepts in that order
collapses the class score fastest (lower curve = better) and inserting
them recovers it fastest (higher curve = better). Random and reversed
orderings are the baselines.
"""

from conceptlens import fidelity, nmf, sobol, synthetic, train_toy
from conceptlens.excerpts import GranularitySpec, extract

data = synthetic.planted_reviews(n_docs=240, seed=0)
toy = train_toy([(d["text"], d["label"]) for d in data["docs"]], d=16, p=24,
                epochs=120, lr=1.0, seed=0)

tau1 = GranularitySpec("sentence", min_words=1)
positive = [d for d in data["docs"] if toy.predict([d["text"]])[0] == 1]
excerpts = [ex for d in positive for ex in extract(d["text"], tau1, doc_id=d["id"])]
A = toy.embed([e.text for e in excerpts])
model = nmf.fit(A, r=8, seed=1, class_id=1)
design = sobol.generate_design(512, 8, seed=2)
report = sobol.estimate_total_indices(model, toy, class_id=1, design=design)

# Held-out evaluation excerpts, projected onto the fixed concept base.
heldout = synthetic.planted_reviews(n_docs=120, seed=1000)
eval_docs = [d for d in heldout["docs"] if toy.predict([d["text"]])[0] == 1]
eval_exc = [ex for d in eval_docs for ex in extract(d["text"], tau1, doc_id=d["id"])]
eval_U = nmf.transform(toy.embed([e.text for e in eval_exc]), model)
print(f"evaluating on {eval_U.shape[0]} held-out excerpts")

for kind, fn in (("deletion", fidelity.deletion_curve), ("insertion", fidelity.insertion_curve)):
    print(f"\n{kind} curves (mean class-1 logit after t concepts):")
    for ordering in ("importance", "reverse"):
        curve = fn(model, toy, report, eval_U, ordering)
        ys = " ".join(f"{y:6.2f}" for _, y in curve.points)
        print(f"  {ordering:10s} [{ys}]  AUC={curve.auc:.3f}")

summary = fidelity.compare_orderings(model, toy, report, eval_U, num_random=10, seed=3)
for kind in ("deletion", "insertion"):
    c = summary["curves"][kind]
    print(f"\n{kind} AUC: importance {c['importance_auc']:.3f}, "
          f"random {c['random_auc_mean']:.3f} +/- {c['random_auc_std']:.3f}, "
          f"reverse {c['reverse_auc']:.3f}")

d = summary["curves"]["deletion"]
i = summary["curves"]["insertion"]
faithful = (d["importance_auc"] < d["random_auc_mean"] < d["reverse_auc"]
            and i["importance_auc"] > i["random_auc_mean"] > i["reverse_auc"])
print(f"\nimportance ordering beats both baselines in both directions: {faithful}")
