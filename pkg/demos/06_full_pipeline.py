"""The whole pipeline through the command-line interface.

Writes a corpus, trains the builtin model, then chains
extract-concepts -> rank-concepts -> explain -> fidelity -> report
into demos/output/, ending with a self-contained report.html.
"""

import json
import pathlib

from conceptlens import cli, synthetic

out = pathlib.Path(__file__).parent / "output"
out.mkdir(exist_ok=True)
workdir = out / "run"

corpus_path = out / "corpus.jsonl"
data = synthetic.planted_reviews(n_docs=240, seed=0)
with open(corpus_path, "w", encoding="utf-8") as fh:
    for doc in data["docs"]:
        fh.write(json.dumps(doc, sort_keys=True) + "\n")
print(f"wrote {corpus_path} ({len(data['docs'])} docs)")

model_path = out / "toy_model.json"
cli.main([
    "train-toy", "--corpus", str(corpus_path), "--out", str(model_path),
    "--d", "16", "--p", "24", "--epochs", "120", "--lr", "1.0", "--seed", "0",
])

base = [
    "--provider", str(model_path),
    "--workdir", str(workdir),
    "--class", "1",
    "--r", "8",
    "--seed", "0",
    "--tau1", "sentence",
    "--min-words", "1",
]

for step in (
    ["extract-concepts", "--corpus", str(corpus_path)],
    ["rank-concepts", "--n-designs", "512"],
    ["explain",
     "--text", "amber0 amber2 citrus1 amber3 velvet0.",
     "--text", "oak1 velvet2 pepper0 honey3 smoke1.",
     "--tau2", "word"],
    ["fidelity", "--corpus", str(corpus_path), "--num-random", "5"],
    ["report"],
):
    print(f"\n$ conceptlens {' '.join(step[:1])} ...")
    rc = cli.main(step + base)
    assert rc == 0, f"step {step[0]} failed with exit code {rc}"

print(f"\nopen {workdir / 'report.html'} in a browser to see the colored concepts")
