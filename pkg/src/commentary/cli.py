"""Command-line entry point: generate commentary, evaluate it, sweep step sizes.

Exit codes: 0 success, 1 configuration or input error, 2 partial results
(a session aborted mid-run).
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .backends import (
    Generator,
    OracleBackend,
    RemoteChatBackend,
    ReplayCache,
    ReplayMissError,
    ScriptedBackend,
)
from .core import SimulatedClock, Speak, WallClock
from .evaluation import (
    EmbeddingScorer,
    EvalReport,
    LexicalOverlapScorer,
    ReferenceTrack,
    SimilarityScorer,
    evaluate,
    load_reference,
    reference_from_srt_text,
    word_stats,
)
from .media import FrameStore, load_manifest
from .prompting import (
    BUILTIN_TEMPLATES,
    PromptSet,
    PromptTemplate,
    load_demonstrations,
    load_template,
    sample_demonstrations,
)
from .strategies import (
    GenerationRecord,
    SpeechRate,
    SpeechRateModel,
    StrategyConfig,
    StrategyKind,
    default_unit_for_language,
    run_session,
)
from .subtitles import parse_srt, to_srt

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2

SWEEP_KINDS = (StrategyKind.STATELESS, StrategyKind.FEEDBACK, StrategyKind.REALTIME)

# Report keys name the metric definitions so the numbers stay interpretable.
KEY_ALIGNMENT = "agreement@1s"
KEY_ROUGE = "rouge_l_concat"
KEY_OVERLAP = "overlap_adjacent_pairs"


class CliError(Exception):
    """Configuration or input problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError(message)


@dataclass
class RunConfig:
    """Everything one generation run needs, resolved and validated."""

    manifest: Path
    strategy: StrategyConfig
    prompts: PromptSet
    templates_spec: str
    backend_spec: str
    cache_mode: str
    cache_dir: Path | None
    out_dir: Path
    seed: int
    jobs: int = 4
    force: bool = False
    wall: bool = False

    def __post_init__(self) -> None:
        if self.cache_mode not in ("off", "record", "replay"):
            raise CliError(f"cache mode must be off, record or replay, got {self.cache_mode!r}")
        if self.cache_mode != "off":
            if self.cache_dir is None:
                raise CliError("--cache-dir is required when caching is enabled")
            if self.cache_dir.resolve() == self.out_dir.resolve():
                raise CliError("output dir must be distinct from cache dir")
        if self.jobs < 1:
            raise CliError("--jobs must be at least 1")


def _resolve_templates(spec: str) -> tuple[PromptTemplate, PromptTemplate]:
    if spec in BUILTIN_TEMPLATES:
        return BUILTIN_TEMPLATES[spec]
    path = Path(spec)
    if not path.is_dir():
        known = ", ".join(sorted(BUILTIN_TEMPLATES))
        raise CliError(f"--templates must name a built-in set ({known}) or a directory")
    init = decision = None
    for file in sorted(path.iterdir()):
        if not file.is_file():
            continue
        template = load_template(file)
        if template.kind == "init":
            if init is not None:
                raise CliError(f"template directory {path} holds more than one init template")
            init = template
        else:
            if decision is not None:
                raise CliError(f"template directory {path} holds more than one decision template")
            decision = template
    if init is None or decision is None:
        raise CliError(f"template directory {path} needs one init and one decision template")
    return init, decision


def parse_rate_model(spec: str) -> SpeechRateModel:
    """Parse a rate-model flag like 'en=word:4,ja=character:8'."""
    rates: dict[str, SpeechRate] = {}
    for part in spec.split(","):
        lang, sep, rest = part.partition("=")
        unit, sep2, value = rest.partition(":")
        if not sep or not sep2 or not lang.strip():
            raise CliError(f"bad --rate-model entry {part!r}; expected lang=unit:rate")
        try:
            rates[lang.strip()] = SpeechRate(unit=unit.strip(), rate=float(value))
        except ValueError as exc:
            raise CliError(f"bad --rate-model entry {part!r}: {exc}") from exc
    return SpeechRateModel(rates=rates)


def _run_config_from_args(args: argparse.Namespace) -> RunConfig:
    try:
        init, decision = _resolve_templates(args.templates)
        language = decision.language
        rate_model = (
            parse_rate_model(args.rate_model) if args.rate_model else SpeechRateModel.default()
        )
        strategy = StrategyConfig(
            kind=StrategyKind.from_name(args.strategy),
            step=args.step,
            window_cap=args.window_cap,
            icl_shots=args.shots,
            rate_model=rate_model,
            language=language,
            max_history=args.max_history,
        )
        demos = ()
        if strategy.icl_shots > 0:
            if not args.demos:
                raise CliError("--demos is required when the strategy uses demonstrations")
            pool = load_demonstrations(args.demos)
            demos = sample_demonstrations(pool, strategy.icl_shots, args.seed)
        prompts = PromptSet(init=init, decision=decision, demonstrations=demos)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return RunConfig(
        manifest=Path(args.manifest),
        strategy=strategy,
        prompts=prompts,
        templates_spec=args.templates,
        backend_spec=args.backend,
        cache_mode=args.cache,
        cache_dir=Path(args.cache_dir) if args.cache_dir else None,
        out_dir=Path(args.out),
        seed=args.seed,
        jobs=args.jobs,
        force=args.force,
        wall=args.wall,
    )


def _load_stores(manifest: Path) -> list[FrameStore]:
    if manifest.is_dir():
        paths = sorted(manifest.glob("*.manifest"))
        if not paths:
            raise CliError(f"no *.manifest files found in {manifest}")
    elif manifest.exists():
        paths = [manifest]
    else:
        raise CliError(f"manifest not found: {manifest}")
    try:
        stores = [load_manifest(p) for p in paths]
    except (OSError, ValueError) as exc:
        raise CliError(f"media: {exc}") from exc
    seen: set[str] = set()
    for store in stores:
        if store.video_id in seen:
            raise CliError(f"duplicate video id {store.video_id!r} across manifests")
        seen.add(store.video_id)
    return stores


def _find_reference(
    path: Path, video_id: str, duration: float, language: str, rates: SpeechRateModel
) -> ReferenceTrack:
    if path.is_dir():
        for suffix in (".srt", ".tsv"):
            candidate = path / f"{video_id}{suffix}"
            if candidate.exists():
                path = candidate
                break
        else:
            raise CliError(f"no reference file for video {video_id!r} in {path}")
    elif not path.exists():
        raise CliError(f"reference not found: {path}")
    try:
        return load_reference(path, video_id, duration, language, rates)
    except ValueError as exc:
        raise CliError(f"reference {path}: {exc}") from exc


def _backend_factory(cfg: RunConfig) -> Callable[[FrameStore], Generator]:
    spec = cfg.backend_spec

    def wrap(inner: Generator) -> Generator:
        if cfg.cache_mode == "off":
            return inner
        return ReplayCache(inner, cfg.cache_dir, cfg.cache_mode)

    if spec == "remote":
        try:
            client = RemoteChatBackend()
        except ValueError as exc:
            raise CliError(f"backend: {exc}") from exc
        return lambda store: wrap(client)
    if spec.startswith("scripted:"):
        script_path = Path(spec.partition(":")[2])
        if not script_path.exists():
            raise CliError(f"script file not found: {script_path}")
        return lambda store: wrap(ScriptedBackend.from_file(script_path))
    if spec.startswith("oracle:"):
        ref_path = Path(spec.partition(":")[2])

        def make(store: FrameStore) -> Generator:
            ref = _find_reference(
                ref_path,
                store.video_id,
                store.video_duration,
                cfg.strategy.language,
                cfg.strategy.rate_model,
            )
            return wrap(OracleBackend(ref))

        return make
    raise CliError(
        f"unknown backend spec {spec!r}; expected remote, scripted:<path> or oracle:<path>"
    )


def render_trace(record: GenerationRecord, seed: int) -> str:
    """Line-oriented session trace: header block, then one row per decision."""
    status = "complete" if record.complete else f"aborted: {record.error}"
    lines = [
        f"#video_id\t{record.video_id}",
        f"#duration\t{record.track.video_duration:.3f}",
        f"#strategy\t{record.config.kind.value}",
        f"#step\t{record.config.step:g}",
        f"#window_cap\t{record.config.window_cap}",
        f"#icl_shots\t{record.config.icl_shots}",
        f"#language\t{record.config.language}",
        f"#seed\t{seed}",
        f"#status\t{status}",
    ]
    for step in record.steps:
        if isinstance(step.outcome, Speak):
            verdict, text = "SPEAK", step.outcome.text.replace("\t", " ")
        else:
            verdict, text = "WAIT", ""
        lines.append(
            f"{step.point.index}\t{step.point.time:.3f}\t{step.prompt_digest}\t{verdict}\t{text}"
        )
    return "\n".join(lines) + "\n"


def read_trace_duration(path: Path) -> float | None:
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#duration\t"):
            return float(line.split("\t", 1)[1])
        if not line.startswith("#"):
            break
    return None


def _generate(cfg: RunConfig) -> int:
    stores = _load_stores(cfg.manifest)
    factory = _backend_factory(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for store in stores:
        trace_path = cfg.out_dir / f"{store.video_id}.trace"
        if trace_path.exists() and not cfg.force:
            raise CliError(f"refusing to overwrite {trace_path}; pass --force to allow")

    def run_one(store: FrameStore) -> GenerationRecord:
        clock = WallClock() if cfg.wall else SimulatedClock()
        return run_session(store, cfg.strategy, factory(store), clock, cfg.prompts)

    records: dict[str, GenerationRecord] = {}
    try:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {pool.submit(run_one, store): store for store in stores}
            for future in as_completed(futures):
                record = future.result()
                records[record.video_id] = record
    except ReplayMissError as exc:
        raise CliError(f"replay cache miss: no entry for digest {exc.digest}") from exc

    partial = False
    summary_lines = ["video_id\tstatus\tdecisions\tutterances"]
    for store in sorted(stores, key=lambda s: s.video_id):
        record = records[store.video_id]
        (cfg.out_dir / f"{store.video_id}.srt").write_text(
            to_srt(record.track), encoding="utf-8"
        )
        (cfg.out_dir / f"{store.video_id}.trace").write_text(
            render_trace(record, cfg.seed), encoding="utf-8"
        )
        status = "complete" if record.complete else "partial"
        partial = partial or not record.complete
        summary_lines.append(
            f"{store.video_id}\t{status}\t{len(record.steps)}\t{len(record.track.utterances)}"
        )
        print(
            f"{store.video_id}: {len(record.steps)} decisions, "
            f"{len(record.track.utterances)} utterances ({status})"
        )
        if not record.complete:
            print(f"  {record.error}", file=sys.stderr)
    (cfg.out_dir / "summary.tsv").write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    return _generate(_run_config_from_args(args))


def _make_scorer(spec: str, language: str) -> SimilarityScorer:
    if spec == "lexical":
        return LexicalOverlapScorer(unit=default_unit_for_language(language))
    if spec == "embedding":
        try:
            return EmbeddingScorer()
        except ValueError as exc:
            raise CliError(f"scorer: {exc}") from exc
    raise CliError(f"unknown scorer {spec!r}; expected lexical or embedding")


def _gen_track(gen_dir: Path, video_id: str, duration: float, language: str):
    text = (gen_dir / f"{video_id}.srt").read_text(encoding="utf-8")
    return reference_from_srt_text(text, video_id, duration, language)


def _pair_duration(gen_dir: Path, ref_path: Path, video_id: str, language: str) -> float:
    trace = gen_dir / f"{video_id}.trace"
    if trace.exists():
        duration = read_trace_duration(trace)
        if duration is not None:
            return duration
    # No trace at hand: take the latest display end across both sides.
    ends = [0.0]
    gen_text = (gen_dir / f"{video_id}.srt").read_text(encoding="utf-8")
    ends.extend(e.end for e in parse_srt(gen_text))
    if ref_path.suffix.lower() == ".srt":
        ends.extend(e.end for e in parse_srt(ref_path.read_text(encoding="utf-8")))
    else:
        for line in ref_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                ends.append(float(line.split("\t", 1)[0]))
    return max(ends)


def _report_rows(video_id: str, report: EvalReport) -> list[str]:
    rows = [
        f"{video_id}\t{KEY_ALIGNMENT}\t{report.alignment:.4f}",
        f"{video_id}\t{KEY_ROUGE}\t{report.rouge_l:.4f}",
        f"{video_id}\t{KEY_OVERLAP}\t{report.overlap:.4f}",
    ]
    rows.extend(
        f"{video_id}\tbin_{i}\t{score:.4f}" for i, score in enumerate(report.bin_scores)
    )
    rows.append(f"{video_id}\tgen_words\t{report.gen_words.min}")
    rows.append(f"{video_id}\tref_words\t{report.ref_words.min}")
    return rows


def _evaluate_dirs(
    gen_dir: Path,
    ref_dir: Path,
    scorer_spec: str,
    language: str,
    report_path: Path | None,
    quiet: bool = False,
) -> tuple[int, dict[str, float] | None]:
    if not gen_dir.is_dir():
        raise CliError(f"generated dir not found: {gen_dir}")
    if not ref_dir.is_dir():
        raise CliError(f"reference dir not found: {ref_dir}")
    gen_ids = {p.stem for p in gen_dir.glob("*.srt")}
    # summary.tsv is a generate artifact, not a reference transcript.
    ref_files = {
        p.stem: p
        for p in list(ref_dir.glob("*.srt")) + list(ref_dir.glob("*.tsv"))
        if p.name != "summary.tsv"
    }
    gen_orphans = sorted(gen_ids - set(ref_files))
    ref_orphans = sorted(set(ref_files) - gen_ids)
    if gen_orphans or ref_orphans:
        print(f"unmatched generated ids: {', '.join(gen_orphans) or '(none)'}", file=sys.stderr)
        print(f"unmatched reference ids: {', '.join(ref_orphans) or '(none)'}", file=sys.stderr)
        return EXIT_CONFIG, None
    if not gen_ids:
        raise CliError(f"no .srt files found in {gen_dir}")

    scorer = _make_scorer(scorer_spec, language)
    rows: list[str] = []
    reports: dict[str, EvalReport] = {}
    gen_tracks = []
    ref_tracks = []
    for video_id in sorted(gen_ids):
        ref_path = ref_files[video_id]
        duration = _pair_duration(gen_dir, ref_path, video_id, language)
        try:
            gen_track = _gen_track(gen_dir, video_id, duration, language)
            ref_track = load_reference(ref_path, video_id, duration, language)
            report = evaluate(gen_track, ref_track, scorer, language)
        except ValueError as exc:
            raise CliError(f"{video_id}: {exc}") from exc
        reports[video_id] = report
        gen_tracks.append(gen_track)
        ref_tracks.append(ref_track)
        rows.extend(_report_rows(video_id, report))
        if not quiet:
            print(f"video: {video_id}")
            print(f"  {KEY_ALIGNMENT}: {report.alignment:.4f}")
            print(f"  {KEY_ROUGE}: {report.rouge_l:.4f}")
            print(f"  {KEY_OVERLAP}: {report.overlap:.4f}")
            print(f"  bin_scores: {' '.join(f'{s:.2f}' for s in report.bin_scores)}")
            print(f"  gen_words: {report.gen_words.min}")
            print(f"  ref_words: {report.ref_words.min}")

    n = len(reports)
    corpus = {
        KEY_ALIGNMENT: sum(r.alignment for r in reports.values()) / n,
        KEY_ROUGE: sum(r.rouge_l for r in reports.values()) / n,
        KEY_OVERLAP: sum(r.overlap for r in reports.values()) / n,
    }
    gen_stats = word_stats(gen_tracks, language)
    ref_stats = word_stats(ref_tracks, language)
    for key, value in corpus.items():
        rows.append(f"corpus\t{key}\t{value:.4f}")
    for i in range(10):
        bin_avg = sum(r.bin_scores[i] for r in reports.values()) / n
        rows.append(f"corpus\tbin_{i}\t{bin_avg:.4f}")
    rows.append(f"corpus\tgen_words_avg\t{gen_stats.avg:.4f}")
    rows.append(f"corpus\tgen_words_min\t{gen_stats.min}")
    rows.append(f"corpus\tgen_words_max\t{gen_stats.max}")
    rows.append(f"corpus\tref_words_avg\t{ref_stats.avg:.4f}")
    rows.append(f"corpus\tref_words_min\t{ref_stats.min}")
    rows.append(f"corpus\tref_words_max\t{ref_stats.max}")
    if not quiet:
        print(f"corpus ({n} videos)")
        for key, value in corpus.items():
            print(f"  {key}: {value:.4f}")
        print(f"  gen_words avg/min/max: {gen_stats.avg:.1f}/{gen_stats.min}/{gen_stats.max}")
        print(f"  ref_words avg/min/max: {ref_stats.avg:.1f}/{ref_stats.min}/{ref_stats.max}")
    if report_path is not None:
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return EXIT_OK, corpus


def cmd_evaluate(args: argparse.Namespace) -> int:
    status, _ = _evaluate_dirs(
        Path(args.gen_dir),
        Path(args.ref_dir),
        args.scorer,
        args.language,
        Path(args.report) if args.report else None,
    )
    return status


def _parse_steps(spec: str) -> list[float]:
    try:
        steps = [float(s) for s in spec.split(",") if s.strip()]
    except ValueError as exc:
        raise CliError(f"bad --steps value {spec!r}") from exc
    if not steps:
        raise CliError("--steps must list at least one step size")
    for step in steps:
        if not step > 0:
            raise CliError(f"step sizes must be positive, got {step:g}")
    return steps


def cmd_sweep(args: argparse.Namespace) -> int:
    steps = _parse_steps(args.steps)
    ref_dir = Path(args.ref)
    if not ref_dir.is_dir():
        raise CliError(f"reference dir not found: {ref_dir}")
    backend_spec = args.backend or f"oracle:{ref_dir}"
    out_root = Path(args.out)

    results: dict[tuple[float, StrategyKind], float] = {}
    worst = EXIT_OK
    for step in steps:
        for kind in SWEEP_KINDS:
            sub_args = argparse.Namespace(
                manifest=args.manifest,
                strategy=kind.value,
                step=step,
                window_cap=args.window_cap,
                shots=None,
                max_history=None,
                backend=backend_spec,
                cache=args.cache,
                cache_dir=args.cache_dir,
                out=str(out_root / f"step-{step:g}" / kind.value),
                seed=args.seed,
                templates=args.templates,
                rate_model=args.rate_model,
                demos=None,
                jobs=args.jobs,
                force=args.force,
                wall=False,
            )
            cfg = _run_config_from_args(sub_args)
            worst = max(worst, _generate(cfg))
            status, corpus = _evaluate_dirs(
                cfg.out_dir, ref_dir, "lexical", cfg.strategy.language, None, quiet=True
            )
            if status != EXIT_OK or corpus is None:
                return EXIT_CONFIG
            results[(step, kind)] = corpus[KEY_ALIGNMENT]

    header = "step\tstateless\tfeedback\treal-time\tavg"
    table_lines = [header]
    for step in steps:
        values = [results[(step, kind)] for kind in SWEEP_KINDS]
        avg = sum(values) / len(values)
        table_lines.append(
            f"{step:g}\t" + "\t".join(f"{v:.3f}" for v in values) + f"\t{avg:.3f}"
        )
    table = "\n".join(table_lines)
    print(table)
    if args.report:
        report_path = Path(args.report)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(table + "\n", encoding="utf-8")
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="commentary", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run sessions over manifests and write SRT + traces")
    gen.add_argument("--manifest", required=True, help="manifest file or directory of *.manifest")
    gen.add_argument(
        "--strategy",
        default="feedback",
        choices=[k.value for k in StrategyKind],
        help="decoding strategy (default: feedback)",
    )
    gen.add_argument("--step", type=float, default=2.0, help="decision interval in seconds")
    gen.add_argument("--window-cap", type=int, default=30, help="max frames per window")
    gen.add_argument("--shots", type=int, default=None, help="ICL demonstrations to inject")
    gen.add_argument("--max-history", type=int, default=None, help="cap on history lines")
    gen.add_argument(
        "--backend", required=True, help="remote | scripted:<path> | oracle:<path>"
    )
    gen.add_argument("--cache", default="off", choices=["off", "record", "replay"])
    gen.add_argument("--cache-dir", default=None)
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int, default=0, help="seed for demonstration sampling")
    gen.add_argument("--templates", default="race-en", help="built-in set name or directory")
    gen.add_argument("--rate-model", default=None, help="e.g. en=word:4,ja=character:8")
    gen.add_argument("--demos", default=None, help="demonstration manifest (uri<TAB>text)")
    gen.add_argument("--jobs", type=int, default=4, help="parallel videos")
    gen.add_argument("--force", action="store_true", help="overwrite existing traces")
    gen.add_argument("--wall", action="store_true", help="run against the wall clock")
    gen.set_defaults(func=cmd_generate)

    ev = sub.add_parser("evaluate", help="score generated SRT against references")
    ev.add_argument("gen_dir", help="directory of generated .srt (+ .trace) files")
    ev.add_argument("ref_dir", help="directory of reference .srt or .tsv transcripts")
    ev.add_argument("--scorer", default="lexical", help="lexical | embedding")
    ev.add_argument("--language", default="en", help="language tag for unit counting")
    ev.add_argument("--report", default=None, help="write the tab-separated report here")
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="run generate+evaluate across step sizes")
    sw.add_argument("--manifest", required=True)
    sw.add_argument("--ref", required=True, help="reference directory")
    sw.add_argument("--steps", required=True, help="comma-separated step sizes, e.g. 1,2,5,10")
    sw.add_argument("--backend", default=None, help="defaults to oracle:<ref>")
    sw.add_argument("--templates", default="race-en")
    sw.add_argument("--rate-model", default=None)
    sw.add_argument("--window-cap", type=int, default=30)
    sw.add_argument("--cache", default="off", choices=["off", "record", "replay"])
    sw.add_argument("--cache-dir", default=None)
    sw.add_argument("--out", required=True)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--jobs", type=int, default=4)
    sw.add_argument("--force", action="store_true")
    sw.add_argument("--report", default=None, help="write the sweep table here")
    sw.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
