/**
 * Provider wire protocol: one JSON object per line, one reply per
 * request, in request order.
 *
 *   {"op":"describe"}                      -> {"p","classes","nonneg","mask_token"}
 *   {"op":"embed","texts":[...]}           -> {"activations":[[...],...]}
 *   {"op":"classify","activations":[...]}  -> {"logits":[[...],...]}
 *   {"op":"shutdown"}                      -> {"ok":true}
 *
 * Operation failures reply {"error","code"} and keep the session;
 * malformed lines reply an error and terminate it.
 */

import { SentimentModel } from "./model.js";

export interface Dispatch {
  reply: string;
  stop: boolean;
}

function errorReply(message: string, code: string, stop: boolean): Dispatch {
  return { reply: JSON.stringify({ error: message, code }), stop };
}

export function handleLine(model: SentimentModel, nonneg: boolean, line: string): Dispatch | null {
  const trimmed = line.trim();
  if (trimmed === "") return null;

  let request: Record<string, unknown>;
  try {
    const parsed: unknown = JSON.parse(trimmed);
    if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
      throw new Error("request must be a JSON object");
    }
    request = parsed as Record<string, unknown>;
    if (typeof request.op !== "string") {
      throw new Error("request must carry a string 'op' field");
    }
  } catch (err) {
    return errorReply(`malformed request: ${(err as Error).message}`, "malformed", true);
  }

  try {
    switch (request.op) {
      case "describe":
        return {
          reply: JSON.stringify({
            p: model.activationDim,
            classes: model.classNames,
            nonneg,
            mask_token: model.maskToken,
          }),
          stop: false,
        };
      case "embed": {
        const texts = request.texts;
        if (!Array.isArray(texts) || !texts.every((t) => typeof t === "string")) {
          throw new Error("embed needs a 'texts' array of strings");
        }
        return { reply: JSON.stringify({ activations: model.embed(texts) }), stop: false };
      }
      case "classify": {
        const activations = request.activations;
        if (!Array.isArray(activations)) {
          throw new Error("classify needs an 'activations' array");
        }
        return {
          reply: JSON.stringify({ logits: model.classify(activations as number[][]) }),
          stop: false,
        };
      }
      case "shutdown":
        return { reply: JSON.stringify({ ok: true }), stop: true };
      default:
        return errorReply(`unknown op '${request.op}'`, "bad_op", false);
    }
  } catch (err) {
    return errorReply((err as Error).message, "op_failed", false);
  }
}
