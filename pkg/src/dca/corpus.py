"""Sparse document/count storage and the docword file format.

A corpus is a CSR-style store of per-document (word id, count) pairs with
zeros suppressed.  Word ids are 0-based internally; the on-disk docword
format is 1-based:

    line 1: I   (number of documents)
    line 2: J   (vocabulary size)
    line 3: NNZ (number of triplet lines that follow)
    then NNZ lines "docId wordId count", whitespace separated.

Duplicate (doc, word) triplets sum.  A vocabulary file holds one token per
line (line number = word id); a group file holds "wordId groupId" pairs with
group ids contiguous from 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError
from .mathfn import log_gamma


@dataclass
class Corpus:
    """Immutable sparse count store.

    doc_ptr[i]:doc_ptr[i+1] slices word_ids/counts for document i; entries
    are deduplicated, sorted by word id, and strictly positive.
    """

    doc_ptr: np.ndarray
    word_ids: np.ndarray
    counts: np.ndarray
    num_words: int
    vocab: list = None
    group_of_word: np.ndarray = None  # (J,) int32; -1 marks ungrouped words
    num_groups: int = 0
    doc_lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        self.doc_ptr = np.ascontiguousarray(self.doc_ptr, dtype=np.int64)
        self.word_ids = np.ascontiguousarray(self.word_ids, dtype=np.int32)
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        self.doc_lengths = np.add.reduceat(
            np.append(self.counts, 0), self.doc_ptr[:-1]
        ) * (np.diff(self.doc_ptr) > 0)
        for arr in (self.doc_ptr, self.word_ids, self.counts, self.doc_lengths):
            arr.flags.writeable = False

    @property
    def num_docs(self):
        return len(self.doc_ptr) - 1

    @property
    def nnz(self):
        return len(self.word_ids)

    @property
    def total_count(self):
        """S, the total token count over the whole collection."""
        return int(self.counts.sum())

    def doc(self, i):
        """Sparse view (word_ids, counts) of document i."""
        lo, hi = self.doc_ptr[i], self.doc_ptr[i + 1]
        return self.word_ids[lo:hi], self.counts[lo:hi]

    def doc_index_of_entry(self):
        """Document index for every stored (word, count) entry."""
        return np.repeat(
            np.arange(self.num_docs, dtype=np.int64), np.diff(self.doc_ptr)
        )

    def group_totals(self, i):
        """Per-group token totals for document i (grouped corpora only)."""
        if self.group_of_word is None:
            raise DataError("corpus has no group partition")
        ids, cnt = self.doc(i)
        totals = np.zeros(self.num_groups, dtype=np.int64)
        np.add.at(totals, self.group_of_word[ids], cnt)
        return totals

    def to_dense(self):
        """Dense (I, J) count matrix; only sensible for small corpora."""
        dense = np.zeros((self.num_docs, self.num_words), dtype=np.int64)
        dense[self.doc_index_of_entry(), self.word_ids] = self.counts
        return dense


def make_corpus(docs, num_words, vocab=None):
    """Build a Corpus from an iterable of (word_ids, counts) pairs.

    Entries are deduplicated by summation and sorted by word id; documents
    may be empty.
    """
    ptr = [0]
    all_ids, all_counts = [], []
    for ids, cnt in docs:
        ids = np.asarray(ids, dtype=np.int64)
        cnt = np.asarray(cnt, dtype=np.int64)
        if ids.size:
            if ids.min() < 0 or ids.max() >= num_words:
                raise DataError("word id out of range")
            if np.any(cnt <= 0):
                raise DataError("sparse counts must be >= 1 (zeros are suppressed)")
            uniq, inv = np.unique(ids, return_inverse=True)
            summed = np.zeros(uniq.size, dtype=np.int64)
            np.add.at(summed, inv, cnt)
            all_ids.append(uniq)
            all_counts.append(summed)
            ptr.append(ptr[-1] + uniq.size)
        else:
            ptr.append(ptr[-1])
    word_ids = np.concatenate(all_ids) if all_ids else np.zeros(0, dtype=np.int64)
    counts = np.concatenate(all_counts) if all_counts else np.zeros(0, dtype=np.int64)
    return Corpus(np.asarray(ptr), word_ids, counts, int(num_words), vocab=vocab)


def bag(tokens):
    """Collapse a word-id sequence into sparse counts (word order is lost).

    Returns (word_ids, counts) with word_ids sorted ascending.  Any
    permutation of the sequence yields the same bag.
    """
    tokens = np.asarray(list(tokens), dtype=np.int64)
    if tokens.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if tokens.min() < 0:
        raise DataError("word ids must be nonnegative")
    ids, counts = np.unique(tokens, return_counts=True)
    return ids, counts.astype(np.int64)


def log_multinomial_coeff(counts):
    """ln(L! / prod_j w_j!) for a sparse or dense count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size and counts.min() < 0:
        raise DataError("counts must be nonnegative")
    if counts.size == 0:
        return 0.0
    total = counts.sum()
    return float(log_gamma(total + 1.0) - log_gamma(counts + 1.0).sum())


def _parse_int(text, line_no, what):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"expected integer {what}, got {text!r}", line=line_no) from None


def load_docword(path):
    """Read a docword file into a Corpus (see module docstring for format)."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    rows = [(no, ln.strip()) for no, ln in enumerate(lines, start=1) if ln.strip()]
    if len(rows) < 3:
        raise ParseError("missing header (need document count, vocabulary size, NNZ)", line=len(rows) + 1)
    header = []
    for no, text in rows[:3]:
        parts = text.split()
        if len(parts) != 1:
            raise ParseError(f"header line must hold a single integer, got {text!r}", line=no)
        header.append(_parse_int(parts[0], no, "header value"))
    num_docs, num_words, num_entries = header
    if num_docs < 0 or num_words < 0 or num_entries < 0:
        raise ParseError("header values must be nonnegative", line=rows[0][0])
    body = rows[3:]
    if len(body) != num_entries:
        raise ParseError(
            f"header promises {num_entries} triplets but file holds {len(body)}",
            line=body[-1][0] if body else rows[2][0],
        )
    doc_ids = np.empty(num_entries, dtype=np.int64)
    word_ids = np.empty(num_entries, dtype=np.int64)
    counts = np.empty(num_entries, dtype=np.int64)
    for idx, (no, text) in enumerate(body):
        parts = text.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'docId wordId count', got {text!r}", line=no)
        d = _parse_int(parts[0], no, "doc id")
        w = _parse_int(parts[1], no, "word id")
        c = _parse_int(parts[2], no, "count")
        if not 1 <= d <= num_docs:
            raise ParseError(f"doc id {d} outside 1..{num_docs}", line=no)
        if not 1 <= w <= num_words:
            raise ParseError(f"word id {w} outside 1..{num_words}", line=no)
        if c <= 0:
            raise ParseError(f"count must be positive, got {c}", line=no)
        doc_ids[idx], word_ids[idx], counts[idx] = d - 1, w - 1, c
    # Deduplicate by summation, then canonicalise to sorted CSR.
    order = np.lexsort((word_ids, doc_ids))
    doc_ids, word_ids, counts = doc_ids[order], word_ids[order], counts[order]
    if num_entries:
        new_pair = np.empty(num_entries, dtype=bool)
        new_pair[0] = True
        new_pair[1:] = (np.diff(doc_ids) != 0) | (np.diff(word_ids) != 0)
        starts = np.flatnonzero(new_pair)
        summed = np.add.reduceat(counts, starts)
        doc_ids, word_ids, counts = doc_ids[starts], word_ids[starts], summed
    ptr = np.zeros(num_docs + 1, dtype=np.int64)
    np.add.at(ptr, doc_ids + 1, 1)
    ptr = np.cumsum(ptr)
    return Corpus(ptr, word_ids, counts, num_words)


def save_docword(corpus, path):
    """Write a corpus in docword format; load(save(load(x))) is bit-stable."""
    doc_idx = corpus.doc_index_of_entry()
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{corpus.num_docs}\n{corpus.num_words}\n{corpus.nnz}\n")
        for d, w, c in zip(doc_idx, corpus.word_ids, corpus.counts):
            handle.write(f"{d + 1} {w + 1} {c}\n")


def load_vocab(path):
    """Read a vocabulary file: one token per line, line number = word id."""
    with open(path, "r", encoding="utf-8") as handle:
        return [line.rstrip("\n") for line in handle]


def load_groups(path, num_words):
    """Read "wordId groupId" pairs into a (J,) group map (-1 = unassigned).

    Group ids must be contiguous 1..G; each word id may appear at most once.
    """
    group_of_word = np.full(num_words, -1, dtype=np.int32)
    seen_groups = set()
    with open(path, "r", encoding="utf-8") as handle:
        for no, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'wordId groupId', got {text!r}", line=no)
            w = _parse_int(parts[0], no, "word id")
            g = _parse_int(parts[1], no, "group id")
            if not 1 <= w <= num_words:
                raise ParseError(f"word id {w} outside 1..{num_words}", line=no)
            if g < 1:
                raise ParseError(f"group id must be >= 1, got {g}", line=no)
            if group_of_word[w - 1] != -1:
                raise ParseError(f"word id {w} assigned to more than one group", line=no)
            group_of_word[w - 1] = g - 1
            seen_groups.add(g)
    if seen_groups and sorted(seen_groups) != list(range(1, max(seen_groups) + 1)):
        raise DataError("group ids must be contiguous 1..G")
    return group_of_word


def split_groups(corpus, group_of_word):
    """Attach a word-group partition to a corpus.

    The partition must cover exactly the word ids that appear in the corpus:
    every observed word in exactly one group, no group entries for words
    that never occur.
    """
    group_of_word = np.asarray(group_of_word, dtype=np.int32)
    if group_of_word.shape != (corpus.num_words,):
        raise DataError("group map must assign every word id (use -1 for none)")
    observed = np.zeros(corpus.num_words, dtype=bool)
    observed[corpus.word_ids] = True
    unassigned = np.flatnonzero(observed & (group_of_word < 0))
    if unassigned.size:
        raise DataError(f"observed word ids without a group: {(unassigned + 1).tolist()}")
    spurious = np.flatnonzero(~observed & (group_of_word >= 0))
    if spurious.size:
        raise DataError(f"grouped word ids never observed: {(spurious + 1).tolist()}")
    groups = np.unique(group_of_word[group_of_word >= 0])
    num_groups = int(groups.size)
    if num_groups == 0:
        raise DataError("group map assigns no words")
    if groups[0] != 0 or groups[-1] != num_groups - 1:
        raise DataError("group ids must be contiguous starting at 1")
    return Corpus(
        corpus.doc_ptr,
        corpus.word_ids,
        corpus.counts,
        corpus.num_words,
        vocab=corpus.vocab,
        group_of_word=group_of_word,
        num_groups=num_groups,
    )
