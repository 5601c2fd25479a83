"""Tokenization, vocabularies and caption metrics (BLEU, ROUGE-L, CIDEr-D).

Metric functions take parallel lists: ``candidates[i]`` is a token list and
``references[i]`` is a list of token lists for the same image.
"""
import math
import re
from collections import Counter
from dataclasses import dataclass, field

BEGIN_TOKEN, END_TOKEN, OOV_TOKEN = "#BEGIN#", "#END#", "#OOV#"
RESERVED = (BEGIN_TOKEN, END_TOKEN, OOV_TOKEN)

_TOKEN_RE = re.compile(r"[,.!?;:]|[^\s,.!?;:]+")


def tokenize(sentence):
    """Lowercase, split on whitespace, and split off , . ! ? ; : as tokens."""
    return _TOKEN_RE.findall(sentence.lower())


@dataclass
class Vocabulary:
    tokens: list
    min_freq: int = 1
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:3]) != RESERVED:
            raise ValueError("vocabulary must start with #BEGIN#, #END#, #OOV#")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def encode(self, tokens):
        oov = self.index[OOV_TOKEN]
        return [self.index.get(t, oov) for t in tokens]

    def decode(self, ids, strip_end=True):
        out = []
        for i in ids:
            tok = self.tokens[i]
            if strip_end and tok == END_TOKEN:
                break
            out.append(tok)
        return out

    def to_record(self):
        return {"tokens": list(self.tokens), "min_freq": self.min_freq}

    @classmethod
    def from_record(cls, rec):
        return cls(list(rec["tokens"]), int(rec["min_freq"]))


def build_vocab(corpus, min_freq=1):
    """Vocabulary of tokens seen at least ``min_freq`` times.

    Order after the reserved tokens: frequency descending, then token.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter(t for doc in corpus for t in doc if t not in RESERVED)
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(list(RESERVED) + kept, min_freq)


def _check(candidates, references):
    if not candidates:
        raise ValueError("no candidates to score")
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} reference sets")
    for refs in references:
        if not refs:
            raise ValueError("every candidate needs at least one reference")


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates, references, n=4):
    """Corpus BLEU-n with clipped counts and the closest-length brevity penalty.

    A zero matched count at any order gives a score of 0 (no smoothing).
    """
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    _check(candidates, references)
    matched = [0] * n
    total = [0] * n
    cand_len = ref_len = 0
    for cand, refs in zip(candidates, references):
        cand_len += len(cand)
        # closest reference length, shorter wins ties
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for k in range(1, n + 1):
            counts = ngrams(cand, k)
            max_ref = Counter()
            for r in refs:
                for g, c in ngrams(r, k).items():
                    max_ref[g] = max(max_ref[g], c)
            matched[k - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            total[k - 1] += max(len(cand) - k + 1, 0)
    if cand_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matched, total)) / n
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_p)


def lcs_length(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_pair(cand, ref, beta=1.2):
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    rec, prec = lcs / len(ref), lcs / len(cand)
    return (1 + beta ** 2) * rec * prec / (rec + beta ** 2 * prec)


def rouge_l(candidates, references, beta=1.2):
    """Mean over images of the best LCS F-measure against any reference."""
    _check(candidates, references)
    return sum(max(rouge_l_pair(c, r, beta) for r in refs)
               for c, refs in zip(candidates, references)) / len(candidates)


def cider_d(candidates, references, n=4, sigma=6.0, per_image=False):
    """CIDEr-D with document frequencies taken from the reference corpus.

    Per order, TF-IDF vectors are compared with candidate weights clipped
    at the reference weights, damped by a Gaussian length penalty, and
    averaged over references; the image score is 10x the mean over orders.
    """
    _check(candidates, references)
    if len(candidates) < 2:
        raise ValueError("CIDEr-D needs at least two images for document frequencies")
    df = Counter()
    for refs in references:
        df.update({g for r in refs for k in range(1, n + 1) for g in ngrams(r, k)})
    log_n = math.log(float(len(references)))

    def vectors(tokens):
        vec = [dict() for _ in range(n)]
        norms = [0.0] * n
        for k in range(1, n + 1):
            for g, tf in ngrams(tokens, k).items():
                w = tf * (log_n - math.log(max(1.0, df[g])))
                vec[k - 1][g] = w
                norms[k - 1] += w * w
        return vec, [math.sqrt(x) for x in norms]

    scores = []
    for cand, refs in zip(candidates, references):
        cv, cn = vectors(cand)
        acc = [0.0] * n
        for r in refs:
            rv, rn = vectors(r)
            delta = len(cand) - len(r)
            for k in range(n):
                val = sum(min(w, rv[k][g]) * rv[k][g] for g, w in cv[k].items() if g in rv[k])
                if cn[k] != 0 and rn[k] != 0:
                    val /= cn[k] * rn[k]
                acc[k] += val * math.exp(-delta * delta / (2 * sigma ** 2))
        scores.append(10.0 * sum(acc) / n / len(refs))
    mean = sum(scores) / len(scores)
    return (mean, scores) if per_image else mean


METRIC_KEYS = ("bleu1", "bleu2", "bleu3", "bleu4", "rougeL", "ciderD")


def score_all(candidates, references):
    """Metric report keyed by ``METRIC_KEYS`` (CIDEr-D unscaled)."""
    report = {f"bleu{k}": bleu(candidates, references, k) for k in range(1, 5)}
    report["rougeL"] = rouge_l(candidates, references)
    # undefined for one image (degenerate document frequencies)
    report["ciderD"] = cider_d(candidates, references) if len(candidates) > 1 else float("nan")
    return report
