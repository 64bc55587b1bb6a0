"""Contract checks every embedding provider must pass.

The same suite runs against the builtin model, the wire client, and any
external model server, so pipeline stages can treat providers
interchangeably. ``check_provider`` exercises the Python interface;
``check_wire_protocol`` replays a golden request/response transcript
against a raw channel (stdio command or TCP endpoint) to pin down the
on-the-wire format independent of any client code.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess

import numpy as np

from .provider import Provider


def check_provider(provider: Provider, sample_texts=None) -> list[str]:
    """Run the provider contract suite; returns a list of failure messages."""
    failures: list[str] = []

    def expect(cond: bool, message: str) -> None:
        if not cond:
            failures.append(message)

    texts = list(sample_texts) if sample_texts else ["a fine pour", "thin and flat", "a"]
    desc = provider.describe()
    expect(desc.p >= 1, f"descriptor p must be >= 1, got {desc.p}")
    expect(len(desc.class_names) >= 2, "descriptor must list at least 2 classes")
    expect(bool(desc.mask_token), "descriptor mask_token must be non-empty")

    A = provider.embed(texts)
    expect(A.shape == (len(texts), desc.p), f"embed shape {A.shape} != ({len(texts)}, {desc.p})")
    expect(bool(np.all(np.isfinite(A))), "embed returned non-finite activations")
    if desc.nonneg_certified:
        expect(bool(np.all(A >= 0)), f"embed returned negative activations (min={A.min():.3g})")

    A2 = provider.embed(texts)
    expect(np.array_equal(A, A2), "embed is not deterministic")

    dup = provider.embed([texts[0], texts[0]])
    expect(np.array_equal(dup[0], dup[1]), "identical texts must embed identically")

    singles = np.vstack([provider.embed([t]) for t in texts])
    expect(np.allclose(A, singles, atol=1e-9), "embed depends on batch composition")

    logits = provider.classify(A)
    expect(
        logits.shape == (len(texts), len(desc.class_names)),
        f"classify shape {logits.shape} != ({len(texts)}, {len(desc.class_names)})",
    )
    logits2 = provider.classify(A)
    expect(np.array_equal(logits, logits2), "classify is not deterministic")

    split = np.vstack([provider.classify(A[:1]), provider.classify(A[1:])])
    expect(np.allclose(logits, split, atol=1e-9), "classify depends on batch composition")

    masked = provider.embed([desc.mask_token])
    expect(bool(np.all(np.isfinite(masked))), "mask-token embed returned non-finite values")
    if desc.nonneg_certified:
        expect(bool(np.all(masked >= 0)), "mask-token embed returned negative values")

    zero_logits = provider.classify(np.zeros((1, desc.p)))
    expect(zero_logits.shape == (1, len(desc.class_names)), "classify(0) has wrong shape")

    return failures


class _RawStdioSession:
    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )

    def send(self, line: str) -> str:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        return self.proc.stdout.readline()

    def close(self):
        try:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class _RawTcpSession:
    def __init__(self, host: str, port: int):
        self.sock = socket.create_connection((host, port), timeout=30)
        self.reader = self.sock.makefile("r", encoding="utf-8")
        self.writer = self.sock.makefile("w", encoding="utf-8")

    def send(self, line: str) -> str:
        self.writer.write(line + "\n")
        self.writer.flush()
        return self.reader.readline()

    def close(self):
        self.sock.close()


def check_wire_protocol(command: str | None = None, host: str | None = None, port: int | None = None) -> list[str]:
    """Replay the golden protocol transcript against a raw server channel.

    Exactly one of ``command`` (stdio child process) or ``host``/``port``
    must be given. Returns failure messages; empty means conformant.
    """

    def open_session():
        if command is not None:
            return _RawStdioSession(command)
        return _RawTcpSession(host, port)

    failures: list[str] = []

    def expect(cond: bool, message: str) -> None:
        if not cond:
            failures.append(message)

    session = open_session()
    try:
        reply = json.loads(session.send(json.dumps({"op": "describe"})))
        for field in ("p", "classes", "nonneg", "mask_token"):
            expect(field in reply, f"describe reply missing {field!r}: {reply}")
        if failures:
            return failures
        p = int(reply["p"])
        n_classes = len(reply["classes"])
        expect(reply["nonneg"] is True, "server must certify non-negative activations")

        reply = json.loads(session.send(json.dumps({"op": "embed", "texts": ["good", "bad"]})))
        acts = reply.get("activations")
        expect(
            isinstance(acts, list) and len(acts) == 2 and all(len(row) == p for row in acts),
            f"embed reply must be 2x{p} activations: got {str(reply)[:120]}",
        )
        if not failures:
            expect(
                min(min(row) for row in acts) >= 0.0,
                "embed reply contains negative activations",
            )

        reply = json.loads(
            session.send(json.dumps({"op": "classify", "activations": [[0.0] * p]}))
        )
        logits = reply.get("logits")
        expect(
            isinstance(logits, list) and len(logits) == 1 and len(logits[0]) == n_classes,
            f"classify reply must be 1x{n_classes} logits: got {str(reply)[:120]}",
        )

        reply = json.loads(session.send(json.dumps({"op": "nope"})))
        expect("error" in reply and "code" in reply, f"unknown op must yield error+code: {reply}")

        reply = json.loads(session.send(json.dumps({"op": "shutdown"})))
        expect(reply.get("ok") is True, f"shutdown must reply ok: {reply}")
    finally:
        session.close()

    # Malformed input must terminate the session after an error reply.
    session = open_session()
    try:
        raw = session.send("this is not json")
        try:
            reply = json.loads(raw)
            expect("error" in reply, f"malformed line must yield an error reply: {reply}")
        except json.JSONDecodeError:
            failures.append(f"malformed line yielded a non-JSON reply: {raw!r}")
        follow_up = session.send(json.dumps({"op": "describe"}))
        expect(follow_up == "", "session must terminate after a malformed line")
    except OSError:
        pass  # connection torn down, also acceptable
    finally:
        session.close()

    return failures
