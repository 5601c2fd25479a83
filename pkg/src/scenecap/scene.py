"""Scene vectors: LDA topics over captions and an MLP predicting them from images.

LDA is fitted by collapsed Gibbs sampling.  Topic proportions inferred for
a caption serve as the training target of a sigmoid/softmax MLP that maps a
global image feature to a scene vector at test time.
"""
import bisect
import json
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc

LDA_FORMAT_VERSION = 1


@dataclass
class LdaModel:
    vocabulary: list
    n_topics: int
    alpha: float
    beta: float
    topic_word: np.ndarray              # (K, V) integer counts
    doc_topic: np.ndarray = field(default=None, repr=False)    # (D, K) from training
    assignments: list = field(default=None, repr=False)       # per-doc topic ids

    def __post_init__(self):
        self.word_index = {w: i for i, w in enumerate(self.vocabulary)}

    @property
    def topic_totals(self):
        return self.topic_word.sum(axis=1)

    def topic_word_distribution(self):
        V = len(self.vocabulary)
        tw = self.topic_word + self.beta
        return tw / (self.topic_totals[:, None] + V * self.beta)

    def to_record(self):
        return {
            "format": "lda", "version": LDA_FORMAT_VERSION,
            "vocabulary": list(self.vocabulary), "n_topics": self.n_topics,
            "alpha": self.alpha, "beta": self.beta,
            "topic_word": self.topic_word.astype(int).tolist(),
        }

    @classmethod
    def from_record(cls, rec):
        if rec.get("format") != "lda" or rec.get("version") != LDA_FORMAT_VERSION:
            raise ValueError("unsupported LDA record")
        return cls(list(rec["vocabulary"]), int(rec["n_topics"]), float(rec["alpha"]),
                   float(rec["beta"]), np.array(rec["topic_word"], dtype=np.int64))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_record(json.load(fh))


def _sample(weights, u):
    """Index drawn from unnormalized ``weights`` with a uniform ``u``."""
    cum = []
    acc = 0.0
    for w in weights:
        acc += w
        cum.append(acc)
    j = bisect.bisect_right(cum, u * acc)
    return min(j, len(cum) - 1)


def lda_fit(corpus, n_topics, alpha=None, beta=0.01, iterations=200, seed=0, on_sweep=None):
    """Fit LDA to token documents by collapsed Gibbs sampling.

    ``alpha`` defaults to ``50 / n_topics``.  ``on_sweep(sweep, model)`` is
    called after every sweep with the current counts (for monitoring).
    """
    if n_topics < 2:
        raise ValueError("need at least two topics")
    docs = [list(d) for d in corpus]
    if not docs:
        raise ValueError("empty corpus")
    if any(len(d) == 0 for d in docs):
        raise ValueError("empty document in corpus")
    alpha = 50.0 / n_topics if alpha is None else float(alpha)
    K = n_topics
    vocab = sorted({str(w) for d in docs for w in d})
    index = {w: i for i, w in enumerate(vocab)}
    V = len(vocab)
    ids = [[index[str(w)] for w in d] for d in docs]

    rng = np.random.default_rng(seed)
    nkw = [[0] * V for _ in range(K)]
    ndk = [[0] * K for _ in docs]
    nk = [0] * K
    z = []
    for d, doc in enumerate(ids):
        zd = rng.integers(0, K, size=len(doc)).tolist()
        for w, k in zip(doc, zd):
            nkw[k][w] += 1
            ndk[d][k] += 1
            nk[k] += 1
        z.append(zd)

    vbeta = V * beta
    topics = range(K)
    model = None
    for sweep in range(iterations):
        u = rng.random(sum(len(d) for d in ids)).tolist()
        pos = 0
        for d, doc in enumerate(ids):
            nd, zd = ndk[d], z[d]
            for j, w in enumerate(doc):
                k = zd[j]
                nkw[k][w] -= 1
                nd[k] -= 1
                nk[k] -= 1
                weights = [(nd[t] + alpha) * (nkw[t][w] + beta) / (nk[t] + vbeta) for t in topics]
                k = _sample(weights, u[pos])
                pos += 1
                zd[j] = k
                nkw[k][w] += 1
                nd[k] += 1
                nk[k] += 1
        if on_sweep is not None or sweep == iterations - 1:
            model = LdaModel(vocab, K, alpha, beta, np.array(nkw, dtype=np.int64),
                             np.array(ndk, dtype=np.int64), [list(zd) for zd in z])
            if on_sweep is not None:
                on_sweep(sweep, model)
    if model is None:  # iterations == 0
        model = LdaModel(vocab, K, alpha, beta, np.array(nkw, dtype=np.int64),
                         np.array(ndk, dtype=np.int64), [list(zd) for zd in z])
    return model


def lda_infer(model, doc, iterations=50, burn_in=25, seed=0):
    """Scene vector of a token document with topic-word counts held fixed.

    Returns the mean over post-burn-in sweeps of ``(n_k + alpha) / (N + K alpha)``.
    """
    ids = [model.word_index[w] for w in doc if w in model.word_index]
    if not ids:
        raise ValueError("document has no words in the model vocabulary")
    if iterations <= burn_in:
        raise ValueError("iterations must exceed burn_in")
    K, alpha = model.n_topics, model.alpha
    phi = model.topic_word_distribution().T.tolist()  # (V, K)
    rng = np.random.default_rng(seed)
    z = rng.integers(0, K, size=len(ids)).tolist()
    nd = [0] * K
    for k in z:
        nd[k] += 1
    acc = np.zeros(K)
    N = len(ids)
    for sweep in range(iterations):
        u = rng.random(N).tolist()
        for j, w in enumerate(ids):
            nd[z[j]] -= 1
            pw = phi[w]
            k = _sample([(nd[t] + alpha) * pw[t] for t in range(K)], u[j])
            z[j] = k
            nd[k] += 1
        if sweep >= burn_in:
            acc += (np.array(nd, dtype=np.float64) + alpha) / (N + K * alpha)
    s = acc / (iterations - burn_in)
    return s / s.sum()


# -- scene MLP -------------------------------------------------------------------

@dataclass
class SceneMlp:
    """Sigmoid hidden layers, softmax output over topics."""
    weights: list   # Tensors, (in, out)
    biases: list

    @property
    def input_size(self):
        return self.weights[0].shape[0]

    @property
    def n_topics(self):
        return self.weights[-1].shape[1]

    def named_parameters(self):
        out = {}
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{j}"] = w
            out[f"b{j}"] = b
        return out

    def with_parameters(self, params):
        n = len(self.weights)
        return SceneMlp([params[f"w{j}"] for j in range(n)], [params[f"b{j}"] for j in range(n)])

    def logits(self, x):
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = nc.sigmoid(h @ w + b)
        return h @ self.weights[-1] + self.biases[-1]

    def to_record(self):
        return {"format": "scene-mlp", "version": 1,
                "weights": [w.data.tolist() for w in self.weights],
                "biases": [b.data.tolist() for b in self.biases]}

    @classmethod
    def from_record(cls, rec):
        if rec.get("format") != "scene-mlp":
            raise ValueError("not a scene-MLP record")
        return cls([nc.parameter(np.array(w, dtype=np.float64)) for w in rec["weights"]],
                   [nc.parameter(np.array(b, dtype=np.float64)) for b in rec["biases"]])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_record(json.load(fh))


def init_scene_mlp(input_size, n_topics, hidden=(1024, 512), seed=0):
    rng = np.random.default_rng(seed)
    sizes = [input_size, *hidden, n_topics]
    weights = [nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(a), (a, b))) for a, b in zip(sizes, sizes[1:])]
    biases = [nc.parameter(np.zeros(b)) for b in sizes[1:]]
    return SceneMlp(weights, biases)


def _soft_cross_entropy(logits, targets):
    """Summed cross-entropy of soft ``targets`` (B, K) under softmax(logits)."""
    p = nc.softmax(logits, axis=-1)
    return -nc.reduce_sum(nc.log(p + 1e-300) * targets)


def scene_mlp_train(features, targets, hidden=(1024, 512), lr=1e-3, epochs=100,
                    batch_size=64, seed=0, history=None):
    """Fit a scene MLP to soft topic targets with ADAM; returns ``SceneMlp``.

    ``history``, if a list, receives the mean training loss of each epoch.
    """
    X = np.asarray(features, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ValueError("features and targets must be (N, d) and (N, K) with equal N")
    if len(X) == 0:
        raise ValueError("no training samples")
    if np.any(Y < 0) or not np.allclose(Y.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("targets must be probability vectors")
    mlp = init_scene_mlp(X.shape[1], Y.shape[1], hidden, seed)
    params = mlp.named_parameters()
    state = nc.AdamState(lr=lr)
    rng = np.random.default_rng(seed + 1)
    for _ in range(epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), batch_size):
            idx = order[start:start + batch_size]
            with nc.Tape():
                loss = _soft_cross_entropy(mlp.with_parameters(params).logits(nc.Tensor(X[idx])), Y[idx])
                grads = nc.gradients(loss, params)
            total += loss.item()
            params, state = nc.adam_step(params, grads, state)
        if history is not None:
            history.append(total / len(X))
    return mlp.with_parameters(params)


def scene_predict(mlp, global_feature):
    """Scene vector(s) for one (d,) feature or a (N, d) batch."""
    x = np.asarray(global_feature, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None] if single else x
    if x2.shape[1] != mlp.input_size:
        raise ValueError(f"feature size {x2.shape[1]} != MLP input size {mlp.input_size}")
    p = nc.softmax_array(mlp.logits(nc.Tensor(x2)).data, axis=-1)
    return p[0] if single else p
