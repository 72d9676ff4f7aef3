"""Automatic metrics: per-second timing agreement, ROUGE-L, binned similarity, verbosity.

Timing alignment is reported as agreement@1s: the fraction of seconds where
the generated and reference tracks agree on speaking versus silence. Overlap
counts adjacent subtitle pairs whose display intervals intersect. ROUGE-L is
computed on whole-track concatenations. All three definitions are echoed in
the report keys so the numbers stay interpretable.
"""

from __future__ import annotations

import math
import os
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .core import CommentaryTrack, Seconds, Utterance, speaking_timeline
from .strategies import (
    UNIT_CHARACTER,
    UNIT_WORD,
    SpeechRateModel,
    count_units,
    default_unit_for_language,
    estimate_duration,
)
from .subtitles import overlap_proportion, parse_srt, track_entries

ENV_EMBED_API_BASE = "COMMENTARY_EMBED_API_BASE"
ENV_EMBED_API_KEY = "COMMENTARY_EMBED_API_KEY"
ENV_EMBED_MODEL = "COMMENTARY_EMBED_MODEL"

BIN_COUNT = 10

# A reference track has the same shape as a generated one.
ReferenceTrack = CommentaryTrack


class SimilarityScorer(Protocol):
    """Scores how close a candidate text is to a reference text."""

    def score(self, candidate: str, reference: str) -> float:
        ...


def _unit_tokens(text: str, unit: str) -> list[str]:
    if unit == UNIT_WORD:
        return text.split()
    if unit == UNIT_CHARACTER:
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unit must be 'word' or 'character', got {unit!r}")


class LexicalOverlapScorer:
    """Token-multiset F1; the offline default so evaluation needs no network."""

    def __init__(self, unit: str = UNIT_WORD) -> None:
        self.unit = unit

    def score(self, candidate: str, reference: str) -> float:
        cand = Counter(_unit_tokens(candidate, self.unit))
        ref = Counter(_unit_tokens(reference, self.unit))
        if not cand or not ref:
            return 0.0
        overlap = sum((cand & ref).values())
        if overlap == 0:
            return 0.0
        precision = overlap / sum(cand.values())
        recall = overlap / sum(ref.values())
        return 2 * precision * recall / (precision + recall)


class EmbeddingScorer:
    """Cosine similarity of embeddings fetched from a remote endpoint.

    Configured from COMMENTARY_EMBED_API_BASE / _KEY / _MODEL unless
    overridden. Concurrent requests are bounded.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model_id: str | None = None,
        timeout: float = 60.0,
        max_concurrency: int = 4,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = (base_url or os.environ.get(ENV_EMBED_API_BASE, "")).rstrip("/")
        if not self.base_url:
            raise ValueError(
                f"no embedding endpoint configured; set {ENV_EMBED_API_BASE} or pass base_url"
            )
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_EMBED_API_KEY, "")
        self.model_id = model_id or os.environ.get(ENV_EMBED_MODEL, "")
        self.timeout = timeout
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(max_concurrency)

    def _embed(self, texts: list[str]) -> list[list[float]]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model_id, "input": texts}
        with self._slots:
            resp = self._session.post(
                f"{self.base_url}/embeddings", json=payload, headers=headers, timeout=self.timeout
            )
        resp.raise_for_status()
        data = resp.json()["data"]
        return [item["embedding"] for item in data]

    def score(self, candidate: str, reference: str) -> float:
        if not candidate.strip() or not reference.strip():
            return 0.0
        a, b = self._embed([candidate, reference])
        dot = sum(x * y for x, y in zip(a, b))
        norm = math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
        return dot / norm if norm else 0.0


@dataclass(frozen=True)
class WordStats:
    """Per-track total unit counts summarized across tracks."""

    avg: float
    min: int
    max: int


@dataclass(frozen=True)
class EvalReport:
    alignment: float
    rouge_l: float
    bin_scores: tuple[float, ...]
    overlap: float
    gen_words: WordStats
    ref_words: WordStats

    def __post_init__(self) -> None:
        if len(self.bin_scores) != BIN_COUNT:
            raise ValueError(f"bin_scores must hold {BIN_COUNT} values")


def timing_alignment(gen: CommentaryTrack, ref: ReferenceTrack) -> float:
    """Fraction of seconds where both tracks speak or both are silent."""
    if gen.video_duration != ref.video_duration:
        raise ValueError(
            f"duration mismatch: {gen.video_duration} vs {ref.video_duration}"
        )
    a = speaking_timeline(gen)
    b = speaking_timeline(ref)
    if not a:
        return 1.0
    return sum(x == y for x, y in zip(a, b)) / len(a)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str, language: str = "en") -> float:
    """Longest-common-subsequence F1 over speech units, scaled to [0, 100].

    English uses whitespace tokens, Japanese uses characters. Zero when either
    side is empty.
    """
    unit = default_unit_for_language(language)
    cand = _unit_tokens(candidate, unit)
    ref = _unit_tokens(reference, unit)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 100.0 * (2 * precision * recall) / (precision + recall)


def binned_similarity(
    gen: CommentaryTrack, ref: ReferenceTrack, scorer: SimilarityScorer
) -> list[float]:
    """Scores over ten uniform duration bins; an utterance belongs to the bin
    containing its start. Bins where either side is empty score 0."""
    if gen.video_duration != ref.video_duration:
        raise ValueError(
            f"duration mismatch: {gen.video_duration} vs {ref.video_duration}"
        )
    duration = gen.video_duration
    if duration <= 0:
        return [0.0] * BIN_COUNT

    def bins_of(track: CommentaryTrack) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(BIN_COUNT)]
        for u in track.utterances:
            b = min(BIN_COUNT - 1, int(u.start * BIN_COUNT / duration))
            out[b].append(u.text)
        return out

    gen_bins = bins_of(gen)
    ref_bins = bins_of(ref)
    scores: list[float] = []
    for g, r in zip(gen_bins, ref_bins):
        if g and r:
            scores.append(scorer.score(" ".join(g), " ".join(r)))
        else:
            scores.append(0.0)
    return scores


def word_stats(tracks: Sequence[CommentaryTrack], language: str = "en") -> WordStats:
    """Avg/min/max of per-track total unit counts."""
    if not tracks:
        raise ValueError("word_stats requires at least one track")
    unit = default_unit_for_language(language)
    totals = [sum(count_units(u.text, unit) for u in t.utterances) for t in tracks]
    return WordStats(avg=sum(totals) / len(totals), min=min(totals), max=max(totals))


def _track_text(track: CommentaryTrack) -> str:
    return " ".join(u.text for u in track.utterances)


def _track_language(gen: CommentaryTrack, ref: ReferenceTrack) -> str:
    if gen.utterances:
        return gen.utterances[0].language
    if ref.utterances:
        return ref.utterances[0].language
    return "en"


def evaluate(
    gen: CommentaryTrack,
    ref: ReferenceTrack,
    scorer: SimilarityScorer,
    language: str | None = None,
) -> EvalReport:
    """Assemble the full report for one generated/reference track pair."""
    lang = language or _track_language(gen, ref)
    return EvalReport(
        alignment=timing_alignment(gen, ref),
        rouge_l=rouge_l(_track_text(gen), _track_text(ref), lang),
        bin_scores=tuple(binned_similarity(gen, ref, scorer)),
        overlap=overlap_proportion(track_entries(gen)),
        gen_words=word_stats([gen], lang),
        ref_words=word_stats([ref], lang),
    )


def reference_from_srt_text(
    text: str, video_id: str, video_duration: Seconds, language: str
) -> ReferenceTrack:
    """Build a reference track from SRT text; display spans give the durations.

    Entries starting after the stated duration are dropped.
    """
    utterances = [
        Utterance(text=e.text, language=language, start=e.start, est_duration=e.end - e.start)
        for e in parse_srt(text)
        if e.start <= video_duration
    ]
    utterances.sort(key=lambda u: u.start)
    return CommentaryTrack(
        video_id=video_id, utterances=tuple(utterances), video_duration=video_duration
    )


def reference_from_transcript_text(
    text: str,
    video_id: str,
    video_duration: Seconds,
    language: str,
    rates: SpeechRateModel | None = None,
) -> ReferenceTrack:
    """Build a reference track from `start_seconds<TAB>text` transcript lines.

    Durations come from the speech-rate model. Lines starting after the stated
    duration are dropped.
    """
    rates = rates or SpeechRateModel.default()
    utterances: list[Utterance] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        start_token, sep, utt_text = line.partition("\t")
        if not sep or not utt_text.strip():
            raise ValueError(f"line {lineno}: expected 'start_seconds<TAB>text'")
        start = float(start_token)
        if start > video_duration:
            continue
        utterances.append(
            Utterance(
                text=utt_text.strip(),
                language=language,
                start=start,
                est_duration=estimate_duration(utt_text.strip(), language, rates),
            )
        )
    utterances.sort(key=lambda u: u.start)
    return CommentaryTrack(
        video_id=video_id, utterances=tuple(utterances), video_duration=video_duration
    )


def load_reference(
    path: str | Path,
    video_id: str,
    video_duration: Seconds,
    language: str,
    rates: SpeechRateModel | None = None,
) -> ReferenceTrack:
    """Load a reference track from an .srt file or a tab-separated transcript."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".srt":
        return reference_from_srt_text(text, video_id, video_duration, language)
    return reference_from_transcript_text(text, video_id, video_duration, language, rates)
