"""Embedding providers: anything that maps texts to non-negative activations
and activation matrices to class logits.

Ships two implementations behind one interface:

* :class:`ToyModel` — a trainable bag-of-words model (mean token
  embedding, ReLU hidden layer, linear head) small enough to run whole
  pipelines on a laptop. Post-ReLU activations are non-negative by
  construction.
* :class:`WireProvider` — a client for external model servers speaking
  newline-delimited JSON over a child process' stdio or a TCP socket.

The sensitivity and fidelity stages work on the logit of the class
under explanation, never on softmax probabilities, so saturated heads
do not flatten the variance signal.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import shlex
import socket
import subprocess
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NonNegativityViolation, PreconditionError, ProviderError
from .excerpts import DEFAULT_MASK_TOKEN

_TOKEN = re.compile(r"\w+(?:'\w+)*")


@dataclass(frozen=True)
class ProviderDescriptor:
    p: int
    class_names: tuple[str, ...]
    nonneg_certified: bool
    mask_token: str

    def __post_init__(self):
        if self.p < 1:
            raise ConfigurationError("activation dimension p must be >= 1")
        if len(self.class_names) < 2:
            raise ConfigurationError("providers must expose at least 2 classes")


class Provider:
    """Base interface; concrete providers implement describe/embed/classify."""

    def describe(self) -> ProviderDescriptor:
        raise NotImplementedError

    def embed(self, texts) -> np.ndarray:
        raise NotImplementedError

    def classify(self, activations) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass

    @property
    def provider_id(self) -> str:
        raise NotImplementedError

    def predict(self, texts) -> np.ndarray:
        """End-to-end argmax class per text (composition of embed and classify)."""
        logits = self.classify(self.embed(texts))
        return np.argmax(logits, axis=1)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace/punctuation tokenization shared by the toy model."""
    return _TOKEN.findall(text.lower())


class ToyModel(Provider):
    """Mean bag-of-words embedding -> ReLU hidden layer -> linear head.

    Out-of-vocabulary tokens share one trained embedding row; the mask
    token maps to the zero embedding, realizing occlusion as "replace
    the token by a zero" while keeping the token count.
    """

    def __init__(
        self,
        vocab: dict[str, int],
        embed_weights,
        hidden_weights,
        hidden_bias,
        head_weights,
        head_bias,
        class_names,
        mask_token: str = DEFAULT_MASK_TOKEN,
        trained_on: str = "",
        seed: int = 0,
        train_accuracy: float | None = None,
    ):
        self.vocab = dict(vocab)
        self.embed_weights = np.asarray(embed_weights, dtype=np.float64)
        self.hidden_weights = np.asarray(hidden_weights, dtype=np.float64)
        self.hidden_bias = np.asarray(hidden_bias, dtype=np.float64)
        self.head_weights = np.asarray(head_weights, dtype=np.float64)
        self.head_bias = np.asarray(head_bias, dtype=np.float64)
        self.class_names = tuple(class_names)
        self.mask_token = mask_token
        self.trained_on = trained_on
        self.seed = seed
        self.train_accuracy = train_accuracy
        self.oov_index = self.embed_weights.shape[0] - 1
        d = self.embed_weights.shape[1]
        p = self.hidden_weights.shape[1]
        if self.hidden_weights.shape[0] != d or self.hidden_bias.shape != (p,):
            raise ConfigurationError("hidden layer shapes are inconsistent")
        if self.head_weights.shape[0] != p or self.head_bias.shape != (len(self.class_names),):
            raise ConfigurationError("head shapes are inconsistent")

    # --- provider interface -------------------------------------------------

    def describe(self) -> ProviderDescriptor:
        return ProviderDescriptor(
            p=self.hidden_weights.shape[1],
            class_names=self.class_names,
            nonneg_certified=True,
            mask_token=self.mask_token,
        )

    def _mean_embedding(self, text: str) -> np.ndarray:
        total = np.zeros(self.embed_weights.shape[1])
        count = 0
        mask_lower = self.mask_token.lower()
        for tok in self._mask_aware_tokens(text):
            count += 1
            if tok == mask_lower:
                continue  # zero embedding
            total += self.embed_weights[self.vocab.get(tok, self.oov_index)]
        if count == 0:
            return total
        return total / count

    def _mask_aware_tokens(self, text: str) -> list[str]:
        # The mask token may contain punctuation ("[MASK]"); protect it from
        # the tokenizer so it stays one token mapped to the zero embedding.
        parts = text.split(self.mask_token)
        out: list[str] = []
        for i, part in enumerate(parts):
            if i:
                out.append(self.mask_token.lower())
            out.extend(_TOKEN.findall(part.lower()))
        return out

    def embed(self, texts) -> np.ndarray:
        rows = [self._mean_embedding(t) for t in texts]
        if not rows:
            return np.zeros((0, self.hidden_weights.shape[1]))
        hidden = np.asarray(rows) @ self.hidden_weights + self.hidden_bias
        return np.maximum(hidden, 0.0)

    def classify(self, activations) -> np.ndarray:
        A = np.asarray(activations, dtype=np.float64)
        if A.ndim != 2 or A.shape[1] != self.head_weights.shape[0]:
            raise PreconditionError(
                f"activations must be (n, {self.head_weights.shape[0]}), got {A.shape}"
            )
        return A @ self.head_weights + self.head_bias

    @property
    def provider_id(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]

    # --- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "kind": "toy-bow-relu",
            "vocab": self.vocab,
            "embed_weights": self.embed_weights.tolist(),
            "hidden_weights": self.hidden_weights.tolist(),
            "hidden_bias": self.hidden_bias.tolist(),
            "head_weights": self.head_weights.tolist(),
            "head_bias": self.head_bias.tolist(),
            "class_names": list(self.class_names),
            "mask_token": self.mask_token,
            "trained_on": self.trained_on,
            "seed": self.seed,
            "train_accuracy": self.train_accuracy,
        }
        return json.dumps(payload, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_json(cls, payload: str) -> "ToyModel":
        rec = json.loads(payload)
        if rec.get("kind") != "toy-bow-relu":
            raise ConfigurationError(f"not a toy model file (kind={rec.get('kind')!r})")
        return cls(
            vocab=rec["vocab"],
            embed_weights=rec["embed_weights"],
            hidden_weights=rec["hidden_weights"],
            hidden_bias=rec["hidden_bias"],
            head_weights=rec["head_weights"],
            head_bias=rec["head_bias"],
            class_names=rec["class_names"],
            mask_token=rec["mask_token"],
            trained_on=rec.get("trained_on", ""),
            seed=rec.get("seed", 0),
            train_accuracy=rec.get("train_accuracy"),
        )

    @classmethod
    def load(cls, path) -> "ToyModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_toy(
    corpus,
    d: int = 32,
    p: int = 32,
    epochs: int = 50,
    lr: float = 0.5,
    seed: int = 0,
    class_names=None,
    mask_token: str = DEFAULT_MASK_TOKEN,
    corpus_id: str = "",
) -> ToyModel:
    """Train the toy classifier with full-batch gradient descent.

    ``corpus`` is a sequence of (text, label) pairs; labels may be any
    hashable values and are mapped to class indices in sorted order
    unless ``class_names`` fixes the order. Fully deterministic given
    the seed; the fitted model records its training-set accuracy.
    """
    corpus = list(corpus)
    if not corpus:
        raise ConfigurationError("training corpus is empty")
    labels = [lab for _, lab in corpus]
    if class_names is None:
        class_names = sorted({str(lab) for lab in labels})
    class_names = [str(c) for c in class_names]
    if len(set(str(lab) for lab in labels)) < 2:
        raise ConfigurationError("degenerate corpus: at least 2 classes required")
    label_to_idx = {c: i for i, c in enumerate(class_names)}
    y = np.array([label_to_idx[str(lab)] for lab in labels])

    vocab_tokens = sorted({tok for text, _ in corpus for tok in tokenize(text)})
    vocab = {tok: i for i, tok in enumerate(vocab_tokens)}
    V = len(vocab) + 1  # trailing shared OOV row

    rng = np.random.default_rng(seed)
    E = rng.normal(0.0, 0.5, size=(V, d))
    W1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, p))
    b1 = np.zeros(p)
    W2 = rng.normal(0.0, 1.0 / np.sqrt(p), size=(p, len(class_names)))
    b2 = np.zeros(len(class_names))

    # Precompute per-document token index lists and the mean-BOW design matrix
    # incidence: X_mean[i] = mean_j E[idx_ij], so dL/dE accumulates via M^T.
    n = len(corpus)
    doc_tokens = [[vocab.get(t, V - 1) for t in tokenize(text)] for text, _ in corpus]
    M = np.zeros((n, V))
    for i, idxs in enumerate(doc_tokens):
        if idxs:
            for j in idxs:
                M[i, j] += 1.0 / len(idxs)

    onehot = np.zeros((n, len(class_names)))
    onehot[np.arange(n), y] = 1.0

    for _ in range(epochs):
        X = M @ E
        Hpre = X @ W1 + b1
        H = np.maximum(Hpre, 0.0)
        logits = H @ W2 + b2
        probs = _softmax(logits)
        G = (probs - onehot) / n
        gW2 = H.T @ G
        gb2 = G.sum(axis=0)
        GH = (G @ W2.T) * (Hpre > 0)
        gW1 = X.T @ GH
        gb1 = GH.sum(axis=0)
        gE = M.T @ (GH @ W1.T)
        W2 -= lr * gW2
        b2 -= lr * gb2
        W1 -= lr * gW1
        b1 -= lr * gb1
        E -= lr * gE

    model = ToyModel(
        vocab=vocab,
        embed_weights=E,
        hidden_weights=W1,
        hidden_bias=b1,
        head_weights=W2,
        head_bias=b2,
        class_names=class_names,
        mask_token=mask_token,
        trained_on=corpus_id,
        seed=seed,
    )
    preds = model.predict([text for text, _ in corpus])
    model.train_accuracy = float(np.mean(preds == y))
    return model


# --- wire protocol -----------------------------------------------------------
#
# One JSON object per line, one request in flight per connection:
#   {"op":"describe"}                       -> {"p":..,"classes":[..],"nonneg":..,"mask_token":".."}
#   {"op":"embed","texts":[..]}             -> {"activations":[[..],..]}
#   {"op":"classify","activations":[[..]]}  -> {"logits":[[..],..]}
#   {"op":"shutdown"}                       -> {"ok":true}
# Errors: {"error":"...","code":"..."}; malformed lines end the session.


class _StdioChannel:
    def __init__(self, command: str):
        self.command = command
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )

    def request(self, line: str) -> str:
        if self.proc.poll() is not None:
            raise OSError("server process exited")
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        reply = self.proc.stdout.readline()
        if not reply:
            raise OSError("server closed the stream")
        return reply

    def close(self):
        try:
            if self.proc.poll() is None:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class _TcpChannel:
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.addr = (host, port)
        self.timeout = timeout
        self._connect()

    def _connect(self):
        self.sock = socket.create_connection(self.addr, timeout=self.timeout)
        self.reader = self.sock.makefile("r", encoding="utf-8")
        self.writer = self.sock.makefile("w", encoding="utf-8")

    def request(self, line: str) -> str:
        self.writer.write(line + "\n")
        self.writer.flush()
        reply = self.reader.readline()
        if not reply:
            raise OSError("server closed the connection")
        return reply

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class WireProvider(Provider):
    """Client for external providers; sequential request/response per channel."""

    def __init__(self, channel, spec: str = "", retries: int = 2):
        self._channel = channel
        self._spec = spec
        self._retries = retries
        self._descriptor: ProviderDescriptor | None = None

    @classmethod
    def from_command(cls, command: str, retries: int = 2) -> "WireProvider":
        try:
            return cls(_StdioChannel(command), spec=f"cmd:{command}", retries=retries)
        except OSError as exc:
            raise ProviderError(f"cannot start provider command {command!r}: {exc}") from exc

    @classmethod
    def from_tcp(cls, host: str, port: int, retries: int = 2) -> "WireProvider":
        attempts = 0
        while True:
            try:
                return cls(_TcpChannel(host, port), spec=f"tcp:{host}:{port}", retries=retries)
            except OSError as exc:
                attempts += 1
                if attempts > retries:
                    raise ProviderError(
                        f"provider unavailable at {host}:{port} after {attempts} attempts: {exc}",
                        retries=attempts,
                    ) from exc

    def _roundtrip(self, payload: dict) -> dict:
        line = json.dumps(payload)
        attempts = 0
        while True:
            try:
                reply = self._channel.request(line)
                break
            except OSError as exc:
                attempts += 1
                if attempts > self._retries:
                    raise ProviderError(
                        f"provider transport failed after {attempts} attempts: {exc}",
                        retries=attempts,
                    ) from exc
        try:
            rec = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise ProviderError(f"provider sent a malformed response: {reply!r}") from exc
        if "error" in rec:
            raise ProviderError(f"provider error [{rec.get('code', '?')}]: {rec['error']}")
        return rec

    def describe(self) -> ProviderDescriptor:
        if self._descriptor is None:
            rec = self._roundtrip({"op": "describe"})
            self._descriptor = ProviderDescriptor(
                p=int(rec["p"]),
                class_names=tuple(str(c) for c in rec["classes"]),
                nonneg_certified=bool(rec["nonneg"]),
                mask_token=str(rec.get("mask_token", DEFAULT_MASK_TOKEN)),
            )
        return self._descriptor

    def embed(self, texts) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, self.describe().p))
        rec = self._roundtrip({"op": "embed", "texts": texts})
        A = np.asarray(rec["activations"], dtype=np.float64).reshape(len(texts), -1)
        if A.size and A.min() < 0:
            raise NonNegativityViolation(
                f"provider returned negative activation (min={A.min():.3g})"
            )
        return A

    def classify(self, activations) -> np.ndarray:
        A = np.asarray(activations, dtype=np.float64)
        if A.shape[0] == 0:
            return np.zeros((0, len(self.describe().class_names)))
        rec = self._roundtrip({"op": "classify", "activations": A.tolist()})
        return np.asarray(rec["logits"], dtype=np.float64).reshape(A.shape[0], -1)

    def shutdown(self) -> None:
        try:
            self._roundtrip({"op": "shutdown"})
        except ProviderError:
            pass

    def close(self) -> None:
        self.shutdown()
        self._channel.close()

    @property
    def provider_id(self) -> str:
        desc = self.describe()
        key = json.dumps(
            {"spec": self._spec, "p": desc.p, "classes": list(desc.class_names)},
            sort_keys=True,
        )
        return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def serve_stdio(provider: Provider, stdin=None, stdout=None) -> None:
    """Serve a provider over stdio; returns when shut down or input ends."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        stop = _serve_line(provider, line, stdout)
        if stop:
            break


def _serve_line(provider: Provider, line: str, out) -> bool:
    def reply(obj) -> None:
        out.write(json.dumps(obj) + "\n")
        out.flush()

    line = line.strip()
    if not line:
        return False
    try:
        req = json.loads(line)
        if not isinstance(req, dict) or "op" not in req:
            raise ValueError("request must be an object with an 'op' field")
    except (json.JSONDecodeError, ValueError) as exc:
        reply({"error": f"malformed request: {exc}", "code": "malformed"})
        return True  # malformed lines terminate the session
    op = req["op"]
    try:
        if op == "describe":
            desc = provider.describe()
            reply(
                {
                    "p": desc.p,
                    "classes": list(desc.class_names),
                    "nonneg": desc.nonneg_certified,
                    "mask_token": desc.mask_token,
                }
            )
        elif op == "embed":
            A = provider.embed(req["texts"])
            reply({"activations": A.tolist()})
        elif op == "classify":
            logits = provider.classify(np.asarray(req["activations"], dtype=np.float64))
            reply({"logits": logits.tolist()})
        elif op == "shutdown":
            reply({"ok": True})
            return True
        else:
            reply({"error": f"unknown op {op!r}", "code": "bad_op"})
    except Exception as exc:  # errors are reported in-band, session continues
        reply({"error": str(exc), "code": "op_failed"})
    return False


def serve_tcp(provider: Provider, host: str, port: int, max_connections: int | None = None):
    """Serve a provider on a TCP socket, one connection at a time.

    Returns the bound (host, port); blocks serving connections until
    ``max_connections`` sessions have ended (forever when None).
    """
    srv = socket.create_server((host, port))
    served = 0
    try:
        while max_connections is None or served < max_connections:
            conn, _ = srv.accept()
            with conn:
                reader = conn.makefile("r", encoding="utf-8")
                writer = conn.makefile("w", encoding="utf-8")
                for line in reader:
                    if _serve_line(provider, line, writer):
                        break
            served += 1
    finally:
        srv.close()


# --- caching -----------------------------------------------------------------


class CachedProvider(Provider):
    """Memoizes embed calls on disk, keyed by (provider id, text hash).

    Occlusion issues thousands of near-duplicate requests; the cache
    makes reruns cheap. Writes are atomic (temp file + rename) so
    concurrent readers never observe partial vectors.
    """

    def __init__(self, inner: Provider, cache_dir):
        self.inner = inner
        self.cache_dir = str(cache_dir)
        os.makedirs(self.cache_dir, exist_ok=True)

    def _key_path(self, text: str) -> str:
        digest = hashlib.sha256(
            (self.inner.provider_id + "\x00" + text).encode("utf-8")
        ).hexdigest()
        return os.path.join(self.cache_dir, digest + ".npy")

    def describe(self) -> ProviderDescriptor:
        return self.inner.describe()

    def embed(self, texts) -> np.ndarray:
        texts = list(texts)
        paths = [self._key_path(t) for t in texts]
        rows: list[np.ndarray | None] = []
        missing: list[int] = []
        for i, path in enumerate(paths):
            if os.path.exists(path):
                rows.append(np.load(path))
            else:
                rows.append(None)
                missing.append(i)
        if missing:
            fresh = self.inner.embed([texts[i] for i in missing])
            for j, i in enumerate(missing):
                rows[i] = fresh[j]
                fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".npy")
                os.close(fd)
                np.save(tmp, fresh[j])
                os.replace(tmp, paths[i])
        p = self.describe().p
        return np.asarray(rows, dtype=np.float64).reshape(len(texts), p)

    def classify(self, activations) -> np.ndarray:
        return self.inner.classify(activations)

    def close(self) -> None:
        self.inner.close()

    @property
    def provider_id(self) -> str:
        return self.inner.provider_id


def open_provider(spec: str, cache_dir=None, retries: int = 2) -> Provider:
    """Open a provider from a spec string.

    Accepted forms: ``builtin:<model.json>`` (or a bare path),
    ``cmd:<command line>`` for a stdio child process, and
    ``tcp:<host>:<port>``.
    """
    if spec.startswith("cmd:"):
        prov: Provider = WireProvider.from_command(spec[4:].strip(), retries=retries)
    elif spec.startswith("tcp:"):
        rest = spec[4:]
        if ":" not in rest:
            raise ConfigurationError(f"tcp provider spec needs host:port, got {spec!r}")
        host, port_s = rest.rsplit(":", 1)
        try:
            port = int(port_s)
        except ValueError as exc:
            raise ConfigurationError(f"invalid port in provider spec {spec!r}") from exc
        prov = WireProvider.from_tcp(host, port, retries=retries)
    else:
        path = spec[8:] if spec.startswith("builtin:") else spec
        if not os.path.exists(path):
            raise ConfigurationError(f"builtin model file not found: {path}")
        prov = ToyModel.load(path)
    if cache_dir is not None:
        prov = CachedProvider(prov, cache_dir)
    return prov
