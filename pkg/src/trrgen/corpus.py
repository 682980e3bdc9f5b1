"""Corpus ingestion, normalization, vocabulary and encoding.

Dataset files are UTF-8 JSON-Lines (keys: app_name, category, rating, review,
response) or TSV with the same five columns in that order. Variable surface
text (emails, URLs, user handles) is replaced by placeholder tokens such as
⟨email⟩ so it cannot blow up the vocabulary.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field

PAD, UNK, SOS, EOS = "⟨pad⟩", "⟨unk⟩", "⟨sos⟩", "⟨eos⟩"
PAD_ID, UNK_ID, SOS_ID, EOS_ID = 0, 1, 2, 3

RATING_TOKENS = {r: f"⟨{r}⟩" for r in range(1, 6)}
PLACEHOLDER_TOKENS = ["⟨email⟩", "⟨url⟩", "⟨app_name⟩", "⟨user_name⟩"]

# Default PII patterns. App names cannot be detected generically, so the
# ⟨app_name⟩ token is reserved but has no default pattern; supply one via
# PreprocessConfig.placeholder_rules when the app's name is known.
DEFAULT_PLACEHOLDER_RULES = [
    (r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}", "⟨email⟩"),
    (r"(?:https?://|www\.)[^\s]+", "⟨url⟩"),
    (r"@[A-Za-z0-9_]+", "⟨user_name⟩"),
]

_TOKEN_RE = re.compile(r"⟨[^⟨⟩\s]+⟩|[A-Za-z0-9_']+|[^\sA-Za-z0-9_'⟨⟩]")


class CorpusError(ValueError):
    pass


@dataclass
class ReviewRecord:
    """One (app, category, rating, review, response) tuple."""

    app_name: str
    category: str
    rating: int
    review_text: str
    response_text: str = ""

    def validate(self, where: str = "record"):
        if self.rating not in (1, 2, 3, 4, 5):
            raise CorpusError(f"{where}: rating must be in [1,5], got {self.rating!r}")
        if not self.review_text.strip():
            raise CorpusError(f"{where}: empty review text")


@dataclass
class PreprocessConfig:
    placeholder_rules: list[tuple[str, str]] = field(
        default_factory=lambda: list(DEFAULT_PLACEHOLDER_RULES))
    lowercase: bool = True
    ad_ngram_n: int = 5
    ad_flag_threshold: float = 0.005
    max_review_tokens: int = 100
    max_response_tokens: int = 120

    def __post_init__(self):
        if self.ad_ngram_n < 1:
            raise CorpusError("ad_ngram_n must be >= 1")
        if not 0.0 < self.ad_flag_threshold <= 1.0:
            raise CorpusError("ad_flag_threshold must be in (0, 1]")


@dataclass
class NgramEntry:
    expression: tuple[str, ...]
    count: int
    example_id: int
    flagged: bool


@dataclass
class NgramReport:
    entries: list[NgramEntry]

    def to_tsv(self) -> str:
        return "".join(f"{e.count}\t{' '.join(e.expression)}\n" for e in self.entries)


# ---------------------------------------------------------------------------
# loading


def load_corpus(path, fmt: str = "jsonl") -> list[ReviewRecord]:
    """Read one record per line, preserving order; raises on the first bad line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            if fmt == "jsonl":
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{where}: malformed JSON ({exc})") from None
                try:
                    rec = ReviewRecord(str(obj["app_name"]), str(obj["category"]),
                                       int(obj["rating"]), str(obj["review"]),
                                       str(obj.get("response", "")))
                except (KeyError, TypeError, ValueError) as exc:
                    raise CorpusError(f"{where}: bad record ({exc})") from None
            elif fmt == "tsv":
                cols = line.split("\t")
                if len(cols) != 5:
                    raise CorpusError(f"{where}: expected 5 tab-separated columns, got {len(cols)}")
                try:
                    rating = int(cols[2])
                except ValueError:
                    raise CorpusError(f"{where}: non-integer rating {cols[2]!r}") from None
                rec = ReviewRecord(cols[0], cols[1], rating, cols[3], cols[4])
            else:
                raise CorpusError(f"unknown corpus format {fmt!r}")
            rec.validate(where)
            records.append(rec)
    return records


def save_corpus(records: list[ReviewRecord], path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"app_name": r.app_name, "category": r.category,
                                 "rating": r.rating, "review": r.review_text,
                                 "response": r.response_text}, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# normalization and tokenization


def normalize_text(text: str, config: PreprocessConfig) -> str:
    """Replace PII-like spans with placeholder tokens; optionally lowercase.

    Lowercasing runs first so the rules see canonical text; the function is
    idempotent because placeholder tokens never re-match any rule.
    """
    if config.lowercase:
        text = text.lower()
    for pattern, token in config.placeholder_rules:
        text = re.sub(pattern, token, text)
    return text


def normalize_corpus(records: list[ReviewRecord], config: PreprocessConfig) -> list[ReviewRecord]:
    return [ReviewRecord(r.app_name, r.category, r.rating,
                         normalize_text(r.review_text, config),
                         normalize_text(r.response_text, config))
            for r in records]


def rating_token(rating: int) -> str:
    if rating not in RATING_TOKENS:
        raise CorpusError(f"rating must be in [1,5], got {rating!r}")
    return RATING_TOKENS[rating]


def category_token(category: str) -> str:
    return f"⟨cat:{category}⟩"


def tokenize(text: str) -> list[str]:
    """Whitespace split with punctuation isolated; ⟨…⟩ placeholders stay atomic."""
    return _TOKEN_RE.findall(text)


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# advertisement-sentence detection


_SENT_END = re.compile(r"[.!?](?=\s|$)")


def split_sentences(text: str) -> list[str]:
    """Split on '.', '!' or '?' followed by whitespace or end of string.

    The concatenation of the returned pieces is byte-identical to the input.
    """
    pieces = []
    start = 0
    for m in _SENT_END.finditer(text):
        end = m.end()
        # carry trailing whitespace with the sentence it follows
        while end < len(text) and text[end].isspace():
            end += 1
        pieces.append(text[start:end])
        start = end
    if start < len(text):
        pieces.append(text[start:])
    return pieces


def mid_ngram(sentence_tokens: list[str], n: int) -> tuple[str, ...] | None:
    """The n consecutive tokens starting at floor((len-n)/2), or None if too short."""
    if n < 1:
        raise CorpusError("n must be >= 1")
    if len(sentence_tokens) < n:
        return None
    start = (len(sentence_tokens) - n) // 2
    return tuple(sentence_tokens[start:start + n])


def ad_report(records: list[ReviewRecord], config: PreprocessConfig) -> NgramReport:
    """Rank the mid n-grams of all response sentences by corpus frequency.

    Entries with count >= ad_flag_threshold * |responses| are flagged for
    human review; removal itself is driven by a curated blocklist.
    """
    counts: Counter = Counter()
    first_seen: dict[tuple[str, ...], int] = {}
    n_responses = 0
    for rid, rec in enumerate(records):
        if not rec.response_text.strip():
            continue
        n_responses += 1
        for sent in split_sentences(rec.response_text):
            expr = mid_ngram(tokenize(sent), config.ad_ngram_n)
            if expr is None:
                continue
            counts[expr] += 1
            first_seen.setdefault(expr, rid)
    cutoff = config.ad_flag_threshold * n_responses
    entries = [NgramEntry(expr, c, first_seen[expr], c >= cutoff)
               for expr, c in counts.most_common()]
    return NgramReport(entries)


def filter_ads(records: list[ReviewRecord], blocklist: set[tuple[str, ...]],
               config: PreprocessConfig) -> list[ReviewRecord]:
    """Delete response sentences whose mid n-gram is blocklisted.

    Unblocked sentences pass through byte-exact; records whose response
    becomes empty are dropped. Review text is never touched.
    """
    for expr in blocklist:
        if len(expr) != config.ad_ngram_n:
            raise CorpusError(f"blocklist expression {expr} does not have {config.ad_ngram_n} tokens")
    out = []
    for rec in records:
        kept = [s for s in split_sentences(rec.response_text)
                if mid_ngram(tokenize(s), config.ad_ngram_n) not in blocklist]
        response = "".join(kept)
        if rec.response_text.strip() and not response.strip():
            continue
        out.append(ReviewRecord(rec.app_name, rec.category, rec.rating,
                                rec.review_text, response))
    return out


def load_blocklist(path) -> set[tuple[str, ...]]:
    with open(path, encoding="utf-8") as fh:
        return {tuple(line.split()) for line in fh if line.strip()}


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Bijective token <-> id map with reserved specials at fixed ids."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(tokens)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise CorpusError("duplicate token in vocabulary")
        for tok, i in ((PAD, PAD_ID), (UNK, UNK_ID), (SOS, SOS_ID), (EOS, EOS_ID)):
            if self.token_to_id.get(tok) != i:
                raise CorpusError(f"special token {tok} missing or misplaced")

    def __len__(self):
        return len(self.id_to_token)

    def encode_token(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.encode_token(t) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    @property
    def categories(self) -> list[str]:
        return [t[5:-1] for t in self.id_to_token
                if t.startswith("⟨cat:") and t.endswith("⟩")]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.id_to_token, fh, ensure_ascii=False, indent=0)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))


def build_vocabulary(records: list[ReviewRecord], min_freq: int = 2) -> Vocabulary:
    """Shared source/target vocabulary over normalized, tokenized records.

    Specials, rating tokens, placeholders and one ⟨cat:NAME⟩ per observed
    category are always included; other tokens need corpus frequency >=
    min_freq. Corpus tokens are ordered by frequency (ties alphabetically)
    so construction is deterministic.
    """
    freq: Counter = Counter()
    categories = set()
    for rec in records:
        categories.add(rec.category)
        freq.update(tokenize(rec.review_text))
        freq.update(tokenize(rec.response_text))

    tokens = [PAD, UNK, SOS, EOS]
    tokens += [RATING_TOKENS[r] for r in range(1, 6)]
    tokens += PLACEHOLDER_TOKENS
    tokens += [category_token(c) for c in sorted(categories)]
    reserved = set(tokens)
    body = sorted((t for t, c in freq.items() if c >= min_freq and t not in reserved),
                  key=lambda t: (-freq[t], t))
    return Vocabulary(tokens + body)


@dataclass
class EncodedRecord:
    src_ids: list[int]
    tgt_ids: list[int]  # ⟨sos⟩ ... ⟨eos⟩
    rating_id: int
    category_id: int


def encode_record(record: ReviewRecord, vocab: Vocabulary,
                  config: PreprocessConfig) -> EncodedRecord:
    cat_tok = category_token(record.category)
    if cat_tok not in vocab.token_to_id:
        raise CorpusError(f"unknown category {record.category!r}")
    src = vocab.encode(tokenize(record.review_text)[:config.max_review_tokens])
    resp = vocab.encode(tokenize(record.response_text)[:config.max_response_tokens - 2])
    return EncodedRecord(src_ids=src,
                         tgt_ids=[SOS_ID] + resp + [EOS_ID],
                         rating_id=vocab.token_to_id[rating_token(record.rating)],
                         category_id=vocab.token_to_id[cat_tok])


# ---------------------------------------------------------------------------
# splitting


def split_corpus(records: list[ReviewRecord], seed: int,
                 ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)):
    """Seed-deterministic shuffle into disjoint, exhaustive (train, valid, test)."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {ratios}")
    idx = list(range(len(records)))
    random.Random(seed).shuffle(idx)
    n = len(records)
    n_train = int(ratios[0] * n)
    n_valid = int(ratios[1] * n)
    train = [records[i] for i in idx[:n_train]]
    valid = [records[i] for i in idx[n_train:n_train + n_valid]]
    test = [records[i] for i in idx[n_train + n_valid:]]
    if not (train and valid and test):
        raise CorpusError(f"split ratios {ratios} produce an empty split for {n} records")
    return train, valid, test
