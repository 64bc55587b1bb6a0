import io
import json
import sys
import threading

import numpy as np
import pytest

from conceptlens import provider as prov
from conceptlens.conformance import check_provider, check_wire_protocol
from conceptlens.errors import ConfigurationError, PreconditionError, ProviderError


def tiny_corpus():
    pos = ["good great fine", "great taste good", "fine good stuff", "great great good"]
    neg = ["bad awful flat", "awful taste bad", "flat bad stuff", "bad bad awful"]
    return [(t, "pos") for t in pos] + [(t, "neg") for t in neg]


@pytest.fixture(scope="module")
def toy():
    return prov.train_toy(tiny_corpus(), d=8, p=6, epochs=60, lr=0.8, seed=1)


def hand_model():
    # V=3 vocab + OOV row, d=2, p=2; hand-set weights for pencil-and-paper checks.
    vocab = {"tok1": 0, "tok2": 1, "tok3": 2}
    E = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [0.0, 0.0]])
    W1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    b1 = np.zeros(2)
    W2 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    b2 = np.zeros(2)
    return prov.ToyModel(vocab, E, W1, b1, W2, b2, class_names=("neg", "pos"))


class TestToyModel:
    def test_hand_forward_pass(self):
        m = hand_model()
        # mean of tok1,tok2 embeddings = (0.5, 0.5); identity hidden map; ReLU no-op.
        A = m.embed(["tok1 tok2"])
        np.testing.assert_allclose(A, [[0.5, 0.5]])

    def test_mask_token_gives_relu_of_bias(self):
        m = hand_model()
        np.testing.assert_array_equal(m.embed(["[MASK]"]), [[0.0, 0.0]])

    def test_mask_token_counts_in_mean(self):
        m = hand_model()
        # "tok1 [MASK]": mean of (1,0) and the zero embedding = (0.5, 0).
        np.testing.assert_allclose(m.embed(["tok1 [MASK]"]), [[0.5, 0.0]])

    def test_identical_texts_identical_rows(self):
        m = hand_model()
        A = m.embed(["a", "a"])
        np.testing.assert_array_equal(A[0], A[1])

    def test_classify_zero_matrix_zero_bias(self):
        m = hand_model()
        np.testing.assert_array_equal(m.classify(np.zeros((3, 2))), np.zeros((3, 2)))

    def test_one_hot_activation_reads_head_row(self):
        m = hand_model()
        np.testing.assert_array_equal(m.classify(np.eye(2)[:1]), [[1.0, -1.0]])

    def test_composition_identity(self, toy):
        texts = ["good great", "awful flat", "unseen words here"]
        direct = toy.classify(toy.embed(texts))
        assert np.array_equal(toy.predict(texts), np.argmax(direct, axis=1))

    def test_oov_tokens_share_one_row(self):
        m = hand_model()
        np.testing.assert_array_equal(m.embed(["zzz"]), m.embed(["qqq"]))

    def test_classify_dimension_mismatch(self, toy):
        with pytest.raises(PreconditionError):
            toy.classify(np.zeros((1, 3)))

    def test_nonnegative_activations_fuzz(self, toy):
        rng = np.random.default_rng(0)
        words = list(toy.vocab) + ["xx", "yy", "zz"]
        for _ in range(50):
            text = " ".join(rng.choice(words, size=rng.integers(1, 10)))
            assert np.all(toy.embed([text]) >= 0)


class TestTraining:
    def test_separable_corpus_reaches_95(self):
        rng = np.random.default_rng(42)
        corpus = []
        for i in range(200):
            label = i % 2
            token = "alpha" if label else "beta"
            filler = " ".join(rng.choice(["x", "y", "z"], size=3))
            corpus.append((f"{token} {filler}", str(label)))
        model = prov.train_toy(corpus, d=8, p=8, epochs=50, lr=0.8, seed=0)
        assert model.train_accuracy >= 0.95

    def test_zero_epochs_random_init(self):
        model = prov.train_toy(tiny_corpus(), d=4, p=4, epochs=0, lr=0.1, seed=5)
        assert model.train_accuracy is not None
        assert 0.0 <= model.train_accuracy <= 1.0

    def test_same_seed_bit_identical(self):
        m1 = prov.train_toy(tiny_corpus(), d=6, p=5, epochs=20, lr=0.5, seed=9)
        m2 = prov.train_toy(tiny_corpus(), d=6, p=5, epochs=20, lr=0.5, seed=9)
        assert m1.to_json() == m2.to_json()

    def test_single_class_rejected(self):
        with pytest.raises(ConfigurationError):
            prov.train_toy([("a", "pos"), ("b", "pos")])

    def test_empty_corpus_rejected(self):
        with pytest.raises(ConfigurationError):
            prov.train_toy([])

    def test_save_load_roundtrip(self, toy, tmp_path):
        path = tmp_path / "model.json"
        toy.save(path)
        loaded = prov.ToyModel.load(path)
        assert loaded.to_json() == toy.to_json()
        texts = ["good", "bad"]
        np.testing.assert_array_equal(loaded.embed(texts), toy.embed(texts))


class TestConformance:
    def test_builtin_passes_contract(self, toy):
        assert check_provider(toy) == []

    def test_wire_client_passes_contract(self, toy, tmp_path):
        path = tmp_path / "model.json"
        toy.save(path)
        command = f"{sys.executable} -m conceptlens.cli serve --provider {path}"
        client = prov.WireProvider.from_command(command)
        try:
            assert check_provider(client) == []
            # Wire client must agree with the in-process model.
            texts = ["good great", "awful"]
            np.testing.assert_allclose(client.embed(texts), toy.embed(texts), atol=1e-9)
        finally:
            client.close()

    def test_stdio_server_protocol_transcript(self, toy, tmp_path):
        path = tmp_path / "model.json"
        toy.save(path)
        command = f"{sys.executable} -m conceptlens.cli serve --provider {path}"
        assert check_wire_protocol(command=command) == []


class TestStdioServer:
    def run_session(self, toy, lines):
        stdin = io.StringIO("".join(line + "\n" for line in lines))
        stdout = io.StringIO()
        prov.serve_stdio(toy, stdin=stdin, stdout=stdout)
        return [json.loads(line) for line in stdout.getvalue().splitlines()]

    def test_describe_embed_classify(self, toy):
        desc = toy.describe()
        replies = self.run_session(
            toy,
            [
                json.dumps({"op": "describe"}),
                json.dumps({"op": "embed", "texts": ["good"]}),
                json.dumps({"op": "classify", "activations": [[0.0] * desc.p]}),
                json.dumps({"op": "shutdown"}),
            ],
        )
        assert replies[0]["p"] == desc.p
        assert len(replies[1]["activations"][0]) == desc.p
        assert len(replies[2]["logits"][0]) == len(desc.class_names)
        assert replies[3] == {"ok": True}

    def test_malformed_line_terminates(self, toy):
        replies = self.run_session(toy, ["{bad json", json.dumps({"op": "describe"})])
        assert len(replies) == 1
        assert replies[0]["code"] == "malformed"

    def test_op_error_keeps_session(self, toy):
        replies = self.run_session(
            toy,
            [
                json.dumps({"op": "classify", "activations": [[1.0]]}),  # wrong width
                json.dumps({"op": "describe"}),
            ],
        )
        assert "error" in replies[0]
        assert replies[1]["p"] == toy.describe().p


class TestTcpServer:
    def test_tcp_roundtrip(self, toy):
        srv_sock_port = []
        import socket as socket_mod

        s = socket_mod.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        thread = threading.Thread(
            target=prov.serve_tcp, args=(toy, "127.0.0.1", port), kwargs={"max_connections": 1}
        )
        thread.start()
        try:
            client = prov.WireProvider.from_tcp("127.0.0.1", port)
            desc = client.describe()
            assert desc.p == toy.describe().p
            np.testing.assert_allclose(client.embed(["good"]), toy.embed(["good"]), atol=1e-9)
            client.close()
        finally:
            thread.join(timeout=10)
        assert not thread.is_alive()

    def test_unreachable_reports_retries(self):
        with pytest.raises(ProviderError) as err:
            prov.WireProvider.from_tcp("127.0.0.1", 1, retries=2)
        assert err.value.retries == 3


class TestCache:
    class CountingProvider(prov.Provider):
        def __init__(self, inner):
            self.inner = inner
            self.embedded_texts = 0

        def describe(self):
            return self.inner.describe()

        def embed(self, texts):
            texts = list(texts)
            self.embedded_texts += len(texts)
            return self.inner.embed(texts)

        def classify(self, activations):
            return self.inner.classify(activations)

        @property
        def provider_id(self):
            return self.inner.provider_id

    def test_cache_skips_repeat_embeds(self, toy, tmp_path):
        counting = self.CountingProvider(toy)
        cached = prov.CachedProvider(counting, tmp_path / "cache")
        A1 = cached.embed(["good", "bad"])
        assert counting.embedded_texts == 2
        A2 = cached.embed(["good", "bad", "new"])
        assert counting.embedded_texts == 3  # only "new" is fresh
        np.testing.assert_array_equal(A1, A2[:2])

    def test_cache_results_match_uncached(self, toy, tmp_path):
        cached = prov.CachedProvider(toy, tmp_path / "cache")
        texts = ["alpha beta", "gamma"]
        np.testing.assert_array_equal(cached.embed(texts), toy.embed(texts))
        np.testing.assert_array_equal(cached.embed(texts), toy.embed(texts))


class TestOpenProvider:
    def test_open_builtin(self, toy, tmp_path):
        path = tmp_path / "m.json"
        toy.save(path)
        opened = prov.open_provider(str(path))
        assert opened.describe() == toy.describe()

    def test_open_missing_builtin(self):
        with pytest.raises(ConfigurationError):
            prov.open_provider("/nonexistent/model.json")

    def test_bad_tcp_spec(self):
        with pytest.raises(ConfigurationError):
            prov.open_provider("tcp:nohost")
