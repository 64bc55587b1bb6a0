"""Word-level occlusion: which words carry each concept in one excerpt.

Each word is replaced by the mask token (-> zero embedding), the
excerpt is re-embedded, and the drop in the single-concept coefficient
is that word's influence on the concept.
"""

import numpy as np

from conceptlens import nmf, occlusion, synthetic, train_toy
from conceptlens.excerpts import GranularitySpec, extract

data = synthetic.planted_reviews(n_docs=240, seed=0)
toy = train_toy([(d["text"], d["label"]) for d in data["docs"]], d=16, p=24,
                epochs=120, lr=1.0, seed=0)

tau1 = GranularitySpec("sentence", min_words=1)
positive = [d for d in data["docs"] if toy.predict([d["text"]])[0] == 1]
excerpts = [ex for d in positive for ex in extract(d["text"], tau1, doc_id=d["id"])]
A = toy.embed([e.text for e in excerpts])
model = nmf.fit(A, r=8, seed=1, class_id=1)

# Pick the excerpt where concept 0 is strongest, and attribute its words.
target = excerpts[int(np.argmax(model.U[:, 0]))]
print(f"excerpt under study: {target.text!r}\n")

attrs = occlusion.attribute(target, model, toy, GranularitySpec("word"))
present = sorted({a.concept_id for a in attrs})
print(f"concepts present (top-decile coefficient): {present}")

print("\ninfluence of each word on each present concept (phi = base - occluded):")
words = sorted({(a.element_index, a.element_text) for a in attrs})
header = "word".ljust(12) + "".join(f"c{k}".rjust(9) for k in present)
print(header)
for idx, word in words:
    row = {a.concept_id: a.phi for a in attrs if a.element_index == idx}
    print(word.ljust(12) + "".join(f"{row[k]:9.4f}" for k in present))

b = occlusion.bundle(attrs, excerpt=target)
print("\nwinning concept and display intensity per word:")
for el in b.elements:
    print(f"  {el['text']!r}: concept {el['concept']}, intensity {el['intensity']:.2f}")
