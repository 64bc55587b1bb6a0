/**
 * Line-delimited transports: this process' stdio, or a TCP listener.
 * Requests are handled strictly in arrival order per connection.
 */

import { createInterface } from "node:readline";
import { createServer, type Server } from "node:net";
import type { Readable, Writable } from "node:stream";

import { SentimentModel } from "./model.js";
import { handleLine } from "./protocol.js";

export function serveStream(
  model: SentimentModel,
  nonneg: boolean,
  input: Readable,
  output: Writable,
  onClose?: () => void
): void {
  const rl = createInterface({ input, crlfDelay: Infinity });
  rl.on("line", (line) => {
    const result = handleLine(model, nonneg, line);
    if (result === null) return;
    output.write(result.reply + "\n");
    if (result.stop) {
      rl.close();
      onClose?.();
    }
  });
  rl.on("close", () => {
    onClose?.();
  });
}

export function serveStdio(model: SentimentModel, nonneg: boolean): void {
  serveStream(model, nonneg, process.stdin, process.stdout, () => process.exit(0));
}

export function serveTcp(
  model: SentimentModel,
  nonneg: boolean,
  host: string,
  port: number
): Server {
  const server = createServer((socket) => {
    serveStream(model, nonneg, socket, socket, () => socket.end());
  });
  server.listen(port, host);
  return server;
}
