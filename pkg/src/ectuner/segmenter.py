"""Fixed-length word segmentation of reads.

A read is cut into consecutive non-overlapping words of ``word_len`` bases
starting at offset 0; a trailing partial word is dropped.  Words containing
'N' are excluded and tallied.  Consecutive kept words form runs; an excluded
word breaks the run, so downstream consumers can avoid conditioning across
the gap.
"""

from __future__ import annotations

from dataclasses import dataclass

from .seqio import Read, ReadSet

WORD_CHARS = frozenset("ACGT")


@dataclass(frozen=True)
class WordSequence:
    """The words of one read, grouped into gap-free runs."""

    read_id: str
    runs: tuple[tuple[str, ...], ...]
    skipped: int = 0

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(w for run in self.runs for w in run)

    @staticmethod
    def from_words(words, read_id: str = "", skipped: int = 0) -> "WordSequence":
        """Build a single-run sequence, for corpora assembled by hand."""
        return WordSequence(read_id=read_id, runs=(tuple(words),), skipped=skipped)


@dataclass
class SegmentStats:
    reads: int = 0
    short_reads: int = 0
    words: int = 0
    skipped_words: int = 0


def segment_read(read: Read, word_len: int) -> WordSequence:
    seq = read.sequence
    if word_len <= 0:
        raise ValueError(f"word length must be positive, got {word_len}")
    if word_len > len(seq):
        raise ValueError(
            f"word length {word_len} exceeds read {read.id!r} length {len(seq)}"
        )
    runs: list[tuple[str, ...]] = []
    current: list[str] = []
    skipped = 0
    for i in range(len(seq) // word_len):
        word = seq[i * word_len : (i + 1) * word_len]
        if WORD_CHARS.issuperset(word):
            current.append(word)
        else:
            skipped += 1
            if current:
                runs.append(tuple(current))
                current = []
    if current:
        runs.append(tuple(current))
    return WordSequence(read_id=read.id, runs=tuple(runs), skipped=skipped)


def segment_corpus(
    readset: ReadSet, word_len: int, stats: SegmentStats | None = None
):
    """Yield a WordSequence per read; reads shorter than ``word_len`` are
    skipped (and tallied on ``stats`` when given)."""
    for read in readset:
        if len(read.sequence) < word_len:
            if stats is not None:
                stats.short_reads += 1
            continue
        ws = segment_read(read, word_len)
        if stats is not None:
            stats.reads += 1
            stats.words += sum(len(run) for run in ws.runs)
            stats.skipped_words += ws.skipped
        yield ws
