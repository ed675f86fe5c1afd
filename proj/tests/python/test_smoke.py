import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

import msd


def small_corpus(seed=3):
    return msd.synth(n_per_class=30, min_tokens=40, max_tokens=80, marker_rate=0.25, seed=seed)


@pytest.fixture(scope="module")
def trained():
    return msd.train(small_corpus(), seed=3, trees=30, epochs=3, dim=8)


def test_version():
    assert msd.__version__.count(".") == 2


def test_score_formula():
    assert msd.confidence_to_score("bullshit", 0.9984) == pytest.approx(2.795880017344075, abs=1e-12)
    assert msd.confidence_to_score("reference", 0.9984) == pytest.approx(-2.795880017344075, abs=1e-12)
    assert msd.to_bs_meter(0.0) == 50.0
    assert msd.to_bs_meter(5.0) == 100.0
    with pytest.raises(msd.DataError):
        msd.confidence_to_score("bullshit", 1.0)


def test_stats():
    r = msd.welch_t([10, 11, 12, 13], [20, 21, 22, 23])
    assert r["t"] == pytest.approx(-10.954451150103322, rel=1e-12)
    assert r["df"] == pytest.approx(6.0, rel=1e-12)
    assert msd.pearson_r([1, 2, 3, 4], [2, 4, 6, 8.5]) > 0.99


def test_synth_layouts():
    docs = small_corpus()
    assert len(docs) == 60
    assert {d["label"] for d in docs} == {"bullshit", "reference"}
    groups = msd.synth(n_per_class=2, min_tokens=10, max_tokens=20, layout="two-group")
    assert {d["group"] for d in groups} == {"bs-register", "ref-register"}
    cells = msd.synth(n_per_class=2, min_tokens=10, max_tokens=20, layout="factorial")
    assert len(cells) == 20 and {d["flag"] for d in cells} == {"bs", "contrast"}


def test_train_and_score(trained):
    model, report = trained
    assert model.digest.startswith("sha256:")
    assert report["eval"]["word"]["n"] > 0
    fresh = small_corpus(seed=99)
    scores = model.score_corpus(fresh, threads=2)
    assert [s["doc_id"] for s in scores] == [d["id"] for d in fresh]
    for s in scores:
        assert 0.0 <= s["bs_meter"] <= 100.0
        assert s["combined"] == pytest.approx((s["word_score"] + s["context_score"]) / 2)
    one = model.score(fresh[0]["text"], doc_id=fresh[0]["id"])
    assert one == scores[0]


def test_manifest_round_trip(trained, tmp_path):
    model, _ = trained
    path = tmp_path / "model.json"
    model.save(path)
    loaded = msd.load_model(path)
    assert loaded.digest == model.digest
    assert json.loads(path.read_text())["digest"] == model.digest
    text = small_corpus(seed=5)[0]["text"]
    assert loaded.score(text) == model.score(text)


def test_training_is_deterministic(trained):
    model, _ = trained
    again, _ = msd.train(small_corpus(), seed=3, trees=30, epochs=3, dim=8)
    assert again.digest == model.digest


def test_errors(tmp_path):
    with pytest.raises(OSError):
        msd.load_model(tmp_path / "missing.json")
    with pytest.raises(msd.DataError):
        msd.train([{"id": "a", "text": "x y", "label": "bullshit"}, {"id": "b", "text": "y z", "label": "bullshit"}])
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    with pytest.raises(msd.DataError):
        msd.load_model(bad)


class EmbedHandler(BaseHTTPRequestHandler):
    dim = 4

    def log_message(self, *args):
        pass

    def reply(self, payload):
        body = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/manifest":
            self.reply({"dim": self.dim, "model_name": "hash-embed"})
        else:
            self.send_error(404)

    def do_POST(self):
        if self.path != "/embed":
            self.send_error(404)
            return
        request = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        out = []
        for text in request["texts"]:
            seq = []
            for word in text.split():
                h = hashlib.sha256(word.encode()).digest()
                seq.append([b / 255.0 - 0.5 for b in h[: self.dim]])
            out.append(seq)
        self.reply({"dim": self.dim, "embeddings": out})


@pytest.fixture
def embed_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), EmbedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_remote_provider(embed_server, monkeypatch, tmp_path):
    monkeypatch.setenv("MSD_EMBED_URL", embed_server)
    model, report = msd.train(small_corpus(), seed=3, trees=10, epochs=5, provider="remote")
    assert model.provider == "remote"
    assert report["eval"]["context"]["n"] > 0
    path = tmp_path / "remote.json"
    model.save(path)
    reloaded = msd.load_model(path, endpoint=embed_server)
    assert reloaded.digest == model.digest
    text = small_corpus(seed=8)[1]["text"]
    assert reloaded.score(text) == model.score(text)


def test_remote_unreachable():
    with pytest.raises(msd.RemoteError):
        msd.train(small_corpus(), trees=5, epochs=1, provider="remote", endpoint="http://127.0.0.1:9")
