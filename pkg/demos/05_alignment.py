"""Do discovered concepts line up with human span annotations?

Synthetic stand-in for aspect-annotated reviews: sentences built from
the signal token groups get annotated with their group name, and the
best-F1 concept per aspect is searched over the whole annotated set.
"""

import numpy as np

from conceptlens import alignment, nmf, synthetic, train_toy
from conceptlens.excerpts import GranularitySpec, extract

rng = np.random.default_rng(0)
groups = synthetic.token_groups(n_groups=4, tokens_per_group=4)
aspect_names = ["Amber", "Citrus", "Velvet", "Oak"]

# Documents of three sentences; each sentence uses a single group, and
# we record its span as the annotation for that group's aspect.
docs, annotations = [], []
for i in range(120):
    sentence_groups = rng.choice(4, size=3, replace=False)
    sentences = []
    for g in sentence_groups:
        words = rng.choice(groups[g], size=4)
        sentences.append(" ".join(words) + ".")
    text = " ".join(sentences)
    doc_id = f"doc{i:03d}"
    pos = 0
    for g, sent in zip(sentence_groups, sentences):
        annotations.append(alignment.AspectAnnotation(doc_id, aspect_names[g], [(pos, pos + len(sent))]))
        pos += len(sent) + 1
    docs.append({"id": doc_id, "text": text, "label": str(int(0 in sentence_groups))})

toy = train_toy([(d["text"], d["label"]) for d in docs], d=16, p=24, epochs=120, lr=1.0, seed=0)
print(f"toy classifier accuracy: {toy.train_accuracy:.3f}")

tau1 = GranularitySpec("sentence", min_words=1)
excerpts = [ex for d in docs for ex in extract(d["text"], tau1, doc_id=d["id"])]
A = toy.embed([e.text for e in excerpts])
model = nmf.fit(A, r=6, seed=1)
U_eval = nmf.transform(A, model)

flags = alignment.label_excerpts(excerpts, annotations)
results = alignment.score_concepts(model, U_eval, flags)
print()
print(alignment.results_to_csv(results))
print("a concept aligning with an aspect means its top-decile excerpts sit")
print("inside that aspect's annotated spans, despite training only on labels.")
print("expect the label-driving aspect (Amber) to align best: the model has")
print("no reason to devote concepts to aspects it never needed for prediction")
