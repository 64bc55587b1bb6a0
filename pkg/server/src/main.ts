/**
 * Entry point.
 *
 *   node dist/main.js --model model/sentiment.json              # stdio server
 *   node dist/main.js --model ... --listen 127.0.0.1:9000       # TCP server
 *   node dist/main.js --model ... --cut embedding               # alternative cut point
 *   node dist/main.js --model ... --forward                     # one-shot direct forward
 *
 * Startup runs a calibration batch through the cut point; a cut whose
 * output is not non-negative makes the server refuse to start, since
 * downstream factorization requires h(x) >= 0.
 */

import process from "node:process";

import { SentimentModel, type CutPoint } from "./model.js";
import { serveStdio, serveTcp } from "./transport.js";

interface Args {
  model: string;
  listen?: string;
  cut: CutPoint;
  forward: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { model: "", cut: "hidden_relu", forward: false };
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case "--model":
        args.model = argv[++i] ?? "";
        break;
      case "--listen":
        args.listen = argv[++i];
        break;
      case "--cut": {
        const value = argv[++i];
        if (value !== "hidden_relu" && value !== "embedding") {
          throw new Error(`unknown cut point '${value}' (expected hidden_relu or embedding)`);
        }
        args.cut = value;
        break;
      }
      case "--forward":
        args.forward = true;
        break;
      default:
        throw new Error(`unknown argument '${argv[i]}'`);
    }
  }
  if (!args.model) {
    throw new Error("--model <path> is required");
  }
  return args;
}

async function readAllStdin(): Promise<string> {
  const chunks: Buffer[] = [];
  for await (const chunk of process.stdin) {
    chunks.push(chunk as Buffer);
  }
  return Buffer.concat(chunks).toString("utf-8");
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  const model = SentimentModel.load(args.model, args.cut);

  if (args.forward) {
    const payload = JSON.parse(await readAllStdin()) as { texts: string[] };
    process.stdout.write(JSON.stringify({ logits: model.forward(payload.texts) }) + "\n");
    return;
  }

  const calibration = model.calibrate();
  if (!calibration.nonneg) {
    process.stderr.write(
      `refusing to start: cut point '${args.cut}' produced a negative activation ` +
        `(min=${calibration.min}) on the calibration batch; ` +
        `choose a non-negative layer such as 'hidden_relu'\n`
    );
    process.exit(1);
  }

  if (args.listen) {
    const sep = args.listen.lastIndexOf(":");
    const host = args.listen.slice(0, sep);
    const port = Number(args.listen.slice(sep + 1));
    if (!host || !Number.isInteger(port)) {
      throw new Error(`--listen needs HOST:PORT, got '${args.listen}'`);
    }
    serveTcp(model, calibration.nonneg, host, port);
    process.stderr.write(`serving on ${host}:${port}\n`);
  } else {
    serveStdio(model, calibration.nonneg);
  }
}

main().catch((err: Error) => {
  process.stderr.write(`${err.message}\n`);
  process.exit(1);
});
