/**
 * Sentiment classifier with an explicit embed/classify split.
 *
 * The model file is the portable JSON format produced by the Python
 * package's toy trainer: a token embedding table, one ReLU hidden
 * layer and a linear head. The server exposes the split f = c(h(x)):
 * `embed` returns the activations at the configured cut point and
 * `classify` runs only the layers after it on raw activation
 * matrices, so perturbed reconstructions never round-trip through
 * tokenization.
 *
 * Cut points: "hidden_relu" (post-ReLU hidden layer, non-negative by
 * construction) and "embedding" (mean token embedding, which is NOT
 * non-negative and exists to exercise the calibration refusal path).
 */

import { readFileSync } from "node:fs";

export type CutPoint = "hidden_relu" | "embedding";

export interface ModelFile {
  kind: string;
  vocab: Record<string, number>;
  embed_weights: number[][];
  hidden_weights: number[][];
  hidden_bias: number[];
  head_weights: number[][];
  head_bias: number[];
  class_names: string[];
  mask_token: string;
}

const TOKEN_RE = /[\p{L}\p{N}_]+(?:'[\p{L}\p{N}_]+)*/gu;

export function matVec(m: number[][], v: number[], bias: number[]): number[] {
  const cols = bias.length;
  const out = bias.slice();
  for (let i = 0; i < v.length; i++) {
    const vi = v[i];
    if (vi === 0) continue;
    const row = m[i];
    for (let j = 0; j < cols; j++) {
      out[j] += vi * row[j];
    }
  }
  return out;
}

export class SentimentModel {
  readonly file: ModelFile;
  readonly cut: CutPoint;
  private readonly oovIndex: number;
  private readonly maskLower: string;

  constructor(file: ModelFile, cut: CutPoint = "hidden_relu") {
    if (file.kind !== "toy-bow-relu") {
      throw new Error(`unsupported model kind: ${file.kind}`);
    }
    this.file = file;
    this.cut = cut;
    this.oovIndex = file.embed_weights.length - 1;
    this.maskLower = file.mask_token.toLowerCase();
  }

  static load(path: string, cut: CutPoint = "hidden_relu"): SentimentModel {
    const file = JSON.parse(readFileSync(path, "utf-8")) as ModelFile;
    return new SentimentModel(file, cut);
  }

  get activationDim(): number {
    return this.cut === "hidden_relu" ? this.file.hidden_bias.length : this.file.embed_weights[0].length;
  }

  get classNames(): string[] {
    return this.file.class_names;
  }

  get maskToken(): string {
    return this.file.mask_token;
  }

  /** Mask-aware tokens: the mask token survives as one unit even though it
   *  contains punctuation the tokenizer would otherwise strip. */
  tokens(text: string): string[] {
    const out: string[] = [];
    const parts = text.split(this.file.mask_token);
    parts.forEach((part, i) => {
      if (i > 0) out.push(this.maskLower);
      for (const m of part.toLowerCase().matchAll(TOKEN_RE)) {
        out.push(m[0]);
      }
    });
    return out;
  }

  /** Mean token embedding; the mask token contributes a zero vector but
   *  still counts toward the mean, realizing occlusion-by-zero. */
  meanEmbedding(text: string): number[] {
    const d = this.file.embed_weights[0].length;
    const total = new Array<number>(d).fill(0);
    const toks = this.tokens(text);
    for (const tok of toks) {
      if (tok === this.maskLower) continue;
      const idx = this.file.vocab[tok] ?? this.oovIndex;
      const row = this.file.embed_weights[idx];
      for (let j = 0; j < d; j++) total[j] += row[j];
    }
    if (toks.length === 0) return total;
    return total.map((v) => v / toks.length);
  }

  private hidden(mean: number[]): number[] {
    const pre = matVec(this.file.hidden_weights, mean, this.file.hidden_bias);
    return pre.map((v) => Math.max(v, 0));
  }

  /** Activations at the cut point, one row per text. */
  embed(texts: string[]): number[][] {
    return texts.map((t) => {
      const mean = this.meanEmbedding(t);
      return this.cut === "hidden_relu" ? this.hidden(mean) : mean;
    });
  }

  /** Layers after the cut point, applied to raw activation rows. */
  classify(activations: number[][]): number[][] {
    return activations.map((row) => {
      if (row.length !== this.activationDim) {
        throw new Error(
          `activation row has ${row.length} entries, cut point ${this.cut} expects ${this.activationDim}`
        );
      }
      const hidden = this.cut === "hidden_relu" ? row : this.hidden(row);
      return matVec(this.file.head_weights, hidden, this.file.head_bias);
    });
  }

  /** End-to-end forward pass, bypassing the split (for verification). */
  forward(texts: string[]): number[][] {
    return texts.map((t) =>
      matVec(this.file.head_weights, this.hidden(this.meanEmbedding(t)), this.file.head_bias)
    );
  }

  /** Verify the cut-point output is non-negative on a calibration batch.
   *  Returns the minimum observed activation. */
  calibrate(extraTexts: string[] = []): { nonneg: boolean; min: number } {
    const vocabSample = Object.keys(this.file.vocab).slice(0, 16);
    const batch = [
      this.file.mask_token,
      vocabSample.join(" "),
      ...vocabSample.slice(0, 8),
      "completely unseen calibration words",
      ...extraTexts,
    ];
    let min = Infinity;
    for (const row of this.embed(batch)) {
      for (const v of row) {
        if (v < min) min = v;
      }
    }
    return { nonneg: min >= 0, min };
  }
}
