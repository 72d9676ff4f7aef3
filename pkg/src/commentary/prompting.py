"""Prompt templates, history and demonstration injection, and response parsing."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Sequence

from .core import DecisionOutcome, Speak, Wait
from .media import FrameRef, FrameWindow

KIND_INIT = "init"
KIND_DECISION = "decision"

CONTEXT_PLACEHOLDER = "{context}"

# Rendered in place of the history block when nothing has been said yet.
EMPTY_HISTORY_MARKER = "none"


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt template; decision templates carry a {context} history slot."""

    id: str
    language: str
    kind: str
    body: str
    role_preamble: str = ""

    def __post_init__(self) -> None:
        if self.kind not in (KIND_INIT, KIND_DECISION):
            raise ValueError(f"template kind must be 'init' or 'decision', got {self.kind!r}")
        has_context = CONTEXT_PLACEHOLDER in self.body
        if self.kind == KIND_DECISION and not has_context:
            raise ValueError(f"decision template {self.id!r} must contain {CONTEXT_PLACEHOLDER}")
        if self.kind == KIND_INIT and has_context:
            raise ValueError(f"init template {self.id!r} must not contain {CONTEXT_PLACEHOLDER}")


@dataclass(frozen=True)
class Demonstration:
    """A frame/commentary exemplar prepended to decision prompts."""

    frames: FrameWindow
    utterance_text: str

    def __post_init__(self) -> None:
        if not self.utterance_text.strip():
            raise ValueError("demonstration utterance text must be non-empty")


@dataclass(frozen=True)
class RenderedPrompt:
    """Backend payload: text plus image attachments in presentation order."""

    text: str
    attachments: tuple[str, ...]
    digest: str


@dataclass(frozen=True)
class PromptSet:
    """The init/decision template pair (plus sampled demonstrations) for one run."""

    init: PromptTemplate
    decision: PromptTemplate
    demonstrations: tuple[Demonstration, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "demonstrations", tuple(self.demonstrations))
        if self.init.kind != KIND_INIT:
            raise ValueError("PromptSet.init must be an init template")
        if self.decision.kind != KIND_DECISION:
            raise ValueError("PromptSet.decision must be a decision template")


def _digest(text: str, attachments: Sequence[str]) -> str:
    h = hashlib.sha256()
    h.update(text.encode("utf-8"))
    for uri in attachments:
        h.update(b"\x00")
        h.update(uri.encode("utf-8"))
    return h.hexdigest()[:16]


def serialize_history(history: Sequence[str]) -> str:
    """History as numbered lines, oldest first; 'none' when empty."""
    if not history:
        return EMPTY_HISTORY_MARKER
    return "\n".join(f"{i}. {text}" for i, text in enumerate(history, 1))


def _join(role_preamble: str, *blocks: str) -> str:
    parts = [p for p in (role_preamble, *blocks) if p]
    return "\n".join(parts)


def render_init(template: PromptTemplate, window: FrameWindow) -> RenderedPrompt:
    """Render the initialization prompt: role and body only, no history block."""
    if template.kind != KIND_INIT:
        raise ValueError(f"render_init requires an init template, got kind {template.kind!r}")
    if not window.frames:
        raise ValueError("window must contain at least one frame")
    text = _join(template.role_preamble, template.body)
    attachments = tuple(f.uri for f in window.frames)
    return RenderedPrompt(text=text, attachments=attachments, digest=_digest(text, attachments))


def render_decision(
    template: PromptTemplate,
    history: Sequence[str],
    demos: Sequence[Demonstration],
    window: FrameWindow,
) -> RenderedPrompt:
    """Render a decision prompt with history and optional demonstrations.

    Attachments are ordered demonstrations first (in demo order), then the
    current window frames ascending; the text numbers the demo commentaries in
    the same order so they pair with the leading attachments.
    """
    if template.kind != KIND_DECISION:
        raise ValueError(
            f"render_decision requires a decision template, got kind {template.kind!r}"
        )
    if not window.frames:
        raise ValueError("window must contain at least one frame")
    demo_block = ""
    if demos:
        lines = ["Example commentary for the attached demonstration frames:"]
        lines.extend(f"{i}. {d.utterance_text}" for i, d in enumerate(demos, 1))
        demo_block = "\n".join(lines)
    body = template.body.replace(CONTEXT_PLACEHOLDER, serialize_history(history))
    text = _join(template.role_preamble, demo_block, body)
    attachments: list[str] = []
    for demo in demos:
        attachments.extend(f.uri for f in demo.frames.frames)
    attachments.extend(f.uri for f in window.frames)
    return RenderedPrompt(
        text=text, attachments=tuple(attachments), digest=_digest(text, attachments)
    )


def parse_response(raw: str, language: str = "en") -> DecisionOutcome:
    """Classify a raw backend reply as Wait or Speak.

    Wait when the reply, ignoring case, whitespace, punctuation and markup, is
    exactly the wait token (or is empty). Anything with other content-bearing
    characters is Speak, with internal newlines collapsed to single spaces.
    The wait token is language independent.
    """
    del language
    stripped = raw.strip()
    if not stripped:
        return Wait()
    content = "".join(ch for ch in stripped if ch.isalnum())
    if content.casefold() == "wait":
        return Wait()
    text = " ".join(part.strip() for part in stripped.splitlines() if part.strip())
    return Speak(text=text)


def load_template(path: str | Path) -> PromptTemplate:
    """Load a template file: three header lines (id:, language:, kind:) then the body."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) < 4:
        raise ValueError(f"{path}: template needs 3 header lines and a body")
    fields = {}
    for expected, line in zip(("id", "language", "kind"), lines[:3]):
        key, sep, value = line.partition(":")
        if key.strip() != expected or not sep:
            raise ValueError(f"{path}: expected header line '{expected}: ...', got {line!r}")
        fields[expected] = value.strip()
    body = "\n".join(lines[3:]).strip("\n")
    return PromptTemplate(
        id=fields["id"], language=fields["language"], kind=fields["kind"], body=body
    )


def load_demonstrations(path: str | Path) -> list[Demonstration]:
    """Load demonstrations from manifest-style lines: uri<TAB>utterance_text."""
    path = Path(path)
    demos: list[Demonstration] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise ValueError(f"{path}:{lineno}: expected 'uri<TAB>utterance_text'")
        uri, text = parts[0].strip(), parts[1].strip()
        ref = FrameRef(video_id="demo", second=0, uri=uri)
        window = FrameWindow(frames=(ref,), window_start=0.0, window_end=0.0)
        demos.append(Demonstration(frames=window, utterance_text=text))
    return demos


def sample_demonstrations(
    pool: Sequence[Demonstration], shots: int, seed: int
) -> tuple[Demonstration, ...]:
    """Uniformly sample `shots` demonstrations; the seed is the only randomness."""
    if shots < 0:
        raise ValueError("shots must be non-negative")
    if shots > len(pool):
        raise ValueError(f"requested {shots} demonstrations but the pool holds {len(pool)}")
    if shots == 0:
        return ()
    return tuple(Random(seed).sample(list(pool), shots))


# Built-in template pairs for the bundled domains.

_RACE_EN_INIT = PromptTemplate(
    id="race-en-init",
    language="en",
    kind=KIND_INIT,
    role_preamble="You are a professional commentator for car racing games.",
    body=(
        "You will be provided with a video clip that represents the start of a race. "
        "Your task is to generate one sentence of commentary.\n"
        "1) You should identify the number of players and their names, along with cars.\n"
        "2) Ignore the background information and refrain from describing the scenery.\n"
        "3) Initial information about the game without being too verbose."
    ),
)

_RACE_EN_DECISION = PromptTemplate(
    id="race-en-decision",
    language="en",
    kind=KIND_DECISION,
    role_preamble="You are a professional commentator for car racing games.",
    body=(
        "You are provided with a video clip from an ongoing car racing game and "
        "commentary generated for the game so far.\n"
        "Previous generated Commentary: {context}\n"
        "Your task is to compare the given video with the previously generated commentary.\n"
        "1) Identify if the video has any new development as compared to the already "
        "provided commentary.\n"
        "2) Ignore the background information and refrain from describing the scenery too much.\n"
        "3) If the state of the game as compared to the provided commentary has not changed, "
        "then generate <WAIT>\n"
        "4) If there are new developments in the provided video, then generate 1 - 2 lines of "
        "commentary to describe it."
    ),
)

_RACE_JA_INIT = PromptTemplate(
    id="race-ja-init",
    language="ja",
    kind=KIND_INIT,
    role_preamble="あなたはカーレースのプロの実況者です。",
    body=(
        "これからレース開始時のビデオクリップが提示されます。\n"
        "それに対して1文の日本語実況を生成してください。\n"
        "冗長になりすぎず、レースの初期情報を伝えてください。"
        "人名や車種には言及せず「プレイヤー」や車の色を使って説明してください．"
    ),
)

_RACE_JA_DECISION = PromptTemplate(
    id="race-ja-decision",
    language="ja",
    kind=KIND_DECISION,
    role_preamble="あなたはカーレースのプロの実況者です。",
    body=(
        "以下に示すのは現在進行中のレースのビデオクリップと、これまでに生成された実況です。\n"
        "これまでの実況: {context}\n"
        "以下のルールに従って日本語実況を1〜2文生成してください：\n"
        "1) 新たな展開があるかどうかを特定してください。\n"
        "2) 背景や風景の描写は避けてください\n"
        "3) 変化がある場合は、それを説明する1文の実況を生成してください。\n"
        "4) 人名や車種には言及せず「プレイヤー」や車の色を使って説明してください．"
    ),
)

_FIGHT_JA_INIT = PromptTemplate(
    id="fight-ja-init",
    language="ja",
    kind=KIND_INIT,
    role_preamble="あなたは大乱闘スマッシュブラザーズのプロの実況者です。",
    body=(
        "これから対戦開始時のビデオクリップが提示されます。\n"
        "このシーンを1文で説明する日本語の実況を生成し視聴者を楽しませてください。\n"
        "観客が没入できるよう驚きや感嘆句も含めてエキサイティングな実況となるよう"
        "心がけてください。話すべきことがなければ <WAIT> を出力してください。"
    ),
)

# The bundled fighting decision template mirrors the racing wording; it ships
# as-is from the source prompt set.
_FIGHT_JA_DECISION = PromptTemplate(
    id="fight-ja-decision",
    language="ja",
    kind=KIND_DECISION,
    role_preamble="あなたはカーレースのプロの実況者です。",
    body=(
        "以下に示すのは現在進行中のレースのビデオクリップと、これまでに生成された実況です。\n"
        "これまでの実況: {context}\n"
        "ビデオに新たな展開があるかどうかを比較・分析し、以下のルールに従って"
        "日本語実況を生成してください：\n"
        "1) 新たな展開があるかどうかを特定してください。\n"
        "2) 状況に変化がなければ <WAIT> を出力してください。\n"
        "3) 明確な変化があれば、それを説明する1文の実況を生成してください。\n"
        "4) 人名や車種には言及せず「プレイヤー」や車の色を使って説明してください"
    ),
)

BUILTIN_TEMPLATES: dict[str, tuple[PromptTemplate, PromptTemplate]] = {
    "race-en": (_RACE_EN_INIT, _RACE_EN_DECISION),
    "race-ja": (_RACE_JA_INIT, _RACE_JA_DECISION),
    "fight-ja": (_FIGHT_JA_INIT, _FIGHT_JA_DECISION),
}


def builtin_prompt_set(
    name: str, demonstrations: Sequence[Demonstration] = ()
) -> PromptSet:
    """Look up a built-in template pair by name (race-en, race-ja, fight-ja)."""
    try:
        init, decision = BUILTIN_TEMPLATES[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_TEMPLATES))
        raise ValueError(f"unknown template set {name!r}; built-ins: {known}") from None
    return PromptSet(init=init, decision=decision, demonstrations=tuple(demonstrations))
