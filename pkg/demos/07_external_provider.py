"""The same pipeline, but the model lives in another process.

Every stage talks to providers through describe/embed/classify, so an
external server speaking the wire protocol is a drop-in replacement
for the in-process toy model. This demo drives the TypeScript
reference server in server/ over stdio (build it first:
`cd server && npm install && npm run build`).

The bundled server model was produced with the toy trainer:
    train_toy(sentiment_phrases(n_docs=160, seed=42), d=24, p=24,
              epochs=150, lr=0.8, seed=42)
"""

import pathlib
import shutil
import sys

import numpy as np

from conceptlens import nmf, sobol, synthetic
from conceptlens.conformance import check_provider
from conceptlens.excerpts import GranularitySpec, extract
from conceptlens.provider import WireProvider

root = pathlib.Path(__file__).parent.parent
server_js = root / "server" / "dist" / "main.js"
model_json = root / "server" / "model" / "sentiment.json"
node = shutil.which("node")

if node is None or not server_js.exists():
    print("server not built; run `cd server && npm install && npm run build` first")
    sys.exit(0)

command = f"{node} {server_js} --model {model_json}"
print(f"spawning: {command}\n")
client = WireProvider.from_command(command)

desc = client.describe()
print(f"external provider: p={desc.p}, classes={list(desc.class_names)}, "
      f"non-negative certified: {desc.nonneg_certified}")

failures = check_provider(client)
print(f"conformance checks: {'all passed' if not failures else failures}")

# Concept discovery and ranking, exactly as with the builtin provider.
tau1 = GranularitySpec("sentence", min_words=1)
docs = [{"id": f"d{i}", "text": t}
        for i, (t, _) in enumerate(synthetic.sentiment_phrases(n_docs=80, seed=9))]
pos_class = list(desc.class_names).index("pos")
preds = client.predict([d["text"] for d in docs])
kept = [d for d, p in zip(docs, preds) if p == pos_class]
excerpts = [ex for d in kept for ex in extract(d["text"], tau1, doc_id=d["id"])]
print(f"\n{len(kept)} docs predicted positive -> {len(excerpts)} excerpts")

A = client.embed([e.text for e in excerpts])
model = nmf.fit(A, r=6, seed=0, class_id=pos_class)
design = sobol.generate_design(256, 6, seed=1)
report = sobol.estimate_total_indices(model, client, pos_class, design)

print("\nconcept importance over the wire:")
for k in report.ranking:
    top = int(np.argmax(model.U[:, k]))
    print(f"  c{k}: S_T={report.indices[k]:.3f}  top excerpt: {excerpts[top].text!r}")

client.close()
print("\nserver shut down cleanly")
