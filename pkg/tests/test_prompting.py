"""Template rendering, demonstration injection, and response parsing."""

import pytest

from commentary import (
    BUILTIN_TEMPLATES,
    Demonstration,
    PromptSet,
    Speak,
    Wait,
    parse_response,
    render_decision,
    render_init,
)
from commentary.media import FrameRef, FrameWindow
from commentary.prompting import (
    PromptTemplate,
    load_demonstrations,
    load_template,
    sample_demonstrations,
    serialize_history,
)

from helpers import synth_store
from commentary import frames_between


def window_of(*seconds, video_id="v1", duration=60.0):
    store = synth_store(video_id=video_id, duration=duration)
    return frames_between(store, float(seconds[0]), float(seconds[-1]) + 1.0, cap=60)


def single_frame_window(uri="file:///demo/0.jpg"):
    ref = FrameRef(video_id="demo", second=0, uri=uri)
    return FrameWindow(frames=(ref,), window_start=0.0, window_end=0.0)


class TestTemplates:
    def test_decision_template_requires_context_slot(self):
        with pytest.raises(ValueError):
            PromptTemplate(id="x", language="en", kind="decision", body="no slot here")

    def test_init_template_rejects_context_slot(self):
        with pytest.raises(ValueError):
            PromptTemplate(id="x", language="en", kind="init", body="bad {context}")

    def test_builtin_sets_are_complete(self):
        assert set(BUILTIN_TEMPLATES) == {"race-en", "race-ja", "fight-ja"}
        for init, decision in BUILTIN_TEMPLATES.values():
            assert init.kind == "init"
            assert decision.kind == "decision"
            assert init.language == decision.language


class TestRenderInit:
    def test_race_en_asks_for_players(self):
        init, _ = BUILTIN_TEMPLATES["race-en"]
        rendered = render_init(init, window_of(0))
        assert "identify the number of players" in rendered.text
        assert len(rendered.attachments) == 1

    def test_fight_ja_contains_wait_fallback(self):
        init, _ = BUILTIN_TEMPLATES["fight-ja"]
        rendered = render_init(init, window_of(0))
        assert "<WAIT> を出力してください" in rendered.text

    def test_rejects_decision_template(self):
        _, decision = BUILTIN_TEMPLATES["race-en"]
        with pytest.raises(ValueError):
            render_init(decision, window_of(0))

    def test_rejects_empty_window(self):
        init, _ = BUILTIN_TEMPLATES["race-en"]
        empty = FrameWindow(frames=(), window_start=0.0, window_end=0.0)
        with pytest.raises(ValueError):
            render_init(init, empty)


class TestRenderDecision:
    def test_history_serialized_as_numbered_lines(self):
        _, decision = BUILTIN_TEMPLATES["race-en"]
        rendered = render_decision(decision, ["P1 leads"], [], window_of(4, 5))
        assert "1. P1 leads" in rendered.text
        assert len(rendered.attachments) == 2

    def test_empty_history_renders_none(self):
        _, decision = BUILTIN_TEMPLATES["race-en"]
        rendered = render_decision(decision, [], [], window_of(4, 5))
        assert "Previous generated Commentary: none" in rendered.text

    def test_eight_demos_plus_two_frames_gives_ten_attachments(self):
        _, decision = BUILTIN_TEMPLATES["race-en"]
        demos = [
            Demonstration(frames=single_frame_window(f"file:///demo/{i}.jpg"), utterance_text=f"demo {i}")
            for i in range(8)
        ]
        window = window_of(4, 5)
        rendered = render_decision(decision, [], demos, window)
        assert len(rendered.attachments) == 10
        assert list(rendered.attachments[:8]) == [f"file:///demo/{i}.jpg" for i in range(8)]
        assert rendered.attachments[8:] == tuple(f.uri for f in window.frames)

    def test_demo_texts_are_numbered_in_order(self):
        _, decision = BUILTIN_TEMPLATES["race-en"]
        demos = [
            Demonstration(frames=single_frame_window(f"u{i}"), utterance_text=f"demo text {i}")
            for i in range(3)
        ]
        rendered = render_decision(decision, [], demos, window_of(0))
        assert "1. demo text 0" in rendered.text
        assert "3. demo text 2" in rendered.text

    def test_rejects_init_template(self):
        init, _ = BUILTIN_TEMPLATES["race-en"]
        with pytest.raises(ValueError):
            render_decision(init, [], [], window_of(0))

    def test_stateless_render_shares_role_and_attachments_with_init(self):
        init, decision = BUILTIN_TEMPLATES["race-en"]
        window = window_of(4, 5)
        no_history = render_decision(decision, [], [], window)
        as_init = render_init(init, window)
        assert no_history.attachments == as_init.attachments
        assert no_history.text.startswith(init.role_preamble)

    def test_digest_is_stable_and_input_sensitive(self):
        _, decision = BUILTIN_TEMPLATES["race-en"]
        window = window_of(4, 5)
        a = render_decision(decision, ["P1 leads"], [], window)
        b = render_decision(decision, ["P1 leads"], [], window)
        c = render_decision(decision, ["P2 leads"], [], window)
        assert a.digest == b.digest
        assert a.digest != c.digest


class TestSerializeHistory:
    def test_empty(self):
        assert serialize_history([]) == "none"

    def test_recent_last(self):
        assert serialize_history(["a", "b"]) == "1. a\n2. b"


class TestParseResponse:
    def test_bare_token(self):
        assert parse_response("<WAIT>") == Wait()

    def test_case_and_whitespace(self):
        assert parse_response("  wait ") == Wait()

    def test_plain_utterance(self):
        assert parse_response("The blue car overtakes on turn one.") == Speak(
            "The blue car overtakes on turn one."
        )

    def test_wait_embedded_in_content_is_speak(self):
        outcome = parse_response("WAIT, no - the red car crashes!")
        assert isinstance(outcome, Speak)

    def test_empty_is_wait(self):
        assert parse_response("") == Wait()
        assert parse_response("   \n ") == Wait()

    def test_newlines_collapse_to_spaces(self):
        outcome = parse_response("first line\n\nsecond line\nthird")
        assert outcome == Speak("first line second line third")


class TestTemplateFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "custom.txt"
        path.write_text(
            "id: custom-dec\nlanguage: en\nkind: decision\n"
            "Say something about {context} now.\n",
            encoding="utf-8",
        )
        template = load_template(path)
        assert template.id == "custom-dec"
        assert template.kind == "decision"
        rendered = render_decision(template, ["hi"], [], window_of(0))
        assert "1. hi" in rendered.text

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("name: x\nlanguage: en\nkind: init\nbody\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_template(path)


class TestDemonstrations:
    def test_load_demonstration_file(self, tmp_path):
        path = tmp_path / "demos.tsv"
        path.write_text(
            "file:///d/0.jpg\tThe cars roar off the line\n"
            "file:///d/1.jpg\tA daring pass into the corner\n",
            encoding="utf-8",
        )
        demos = load_demonstrations(path)
        assert len(demos) == 2
        assert demos[0].frames.frames[0].uri == "file:///d/0.jpg"

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "demos.tsv"
        path.write_text("just-a-uri-no-text\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_demonstrations(path)

    def test_sampling_is_seeded(self):
        pool = [
            Demonstration(frames=single_frame_window(f"u{i}"), utterance_text=f"t{i}")
            for i in range(20)
        ]
        a = sample_demonstrations(pool, 8, seed=3)
        b = sample_demonstrations(pool, 8, seed=3)
        c = sample_demonstrations(pool, 8, seed=4)
        assert a == b
        assert len(a) == 8
        assert a != c

    def test_sampling_rejects_oversized_request(self):
        pool = [Demonstration(frames=single_frame_window(), utterance_text="t")]
        with pytest.raises(ValueError):
            sample_demonstrations(pool, 2, seed=0)


class TestPromptSet:
    def test_kind_enforcement(self):
        init, decision = BUILTIN_TEMPLATES["race-en"]
        with pytest.raises(ValueError):
            PromptSet(init=decision, decision=decision)
        with pytest.raises(ValueError):
            PromptSet(init=init, decision=init)
