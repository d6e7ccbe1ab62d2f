"""``mustok`` command line.

Exit status: 0 on success, 1 on usage errors, 2 when an input is malformed.
Diagnostics go to standard error; results go to files or standard output.
"""

from __future__ import annotations

import argparse
import json
import math
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .bpe import BpeModel, SubwordSequence, bpe_decode, train_bpe
from .errors import DataError, EmptyCorpus, NoPitchedNotes, TooFewBars, UnknownPiece
from .quality import groove_similarity, pitch_class_entropy
from .smf import read_midi, write_midi
from .stats import CorpusStats, avg_tokens_per_song, encode_any, stats_table
from .structure import (DEFAULT_BANDS, DEFAULT_HOP_S, MAX_FRAMES, SiBand, render_scape_plot,
                        song_structure, structureness_indicator)
from .symbols import Alphabet, build_alphabet, decode_symbols, encode_symbols
from .synth import folk_corpus
from .tokens import (Scheme, TokenizerConfig, TokenSequence, detokenize_midilike, detokenize_remi,
                     quantize, read_token_text, song_ids, tokenize_midilike, tokenize_remi,
                     write_token_text)
from .unigram import UnigramConfig, UnigramModel, train_unigram, unigram_decode

JOBS_ENV = "MUSTOK_JOBS"
MIDI_SUFFIXES = (".mid", ".midi")
BAND_LABELS = ("SI_short", "SI_medium", "SI_long")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    scheme: Scheme = Scheme.REMI
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    subword: str = "none"  # bpe | unigram | none
    target_vocab: int = 0
    si_bands: tuple[SiBand, ...] = DEFAULT_BANDS
    frame_hop_s: float = DEFAULT_HOP_S
    seed: int = 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- helpers


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """``map`` that keeps input order whatever the worker count."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    # spawn, not fork: the numba kernels may already have started an OpenMP runtime
    with ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _midi_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in MIDI_SUFFIXES)
        if not files:
            raise EmptyCorpus(f"no MIDI files in {path}")
        return files
    if not path.exists():
        raise UsageError(f"{path} does not exist")
    return [path]


def _tokenizer_config(args) -> TokenizerConfig:
    try:
        return TokenizerConfig(positions_per_bar=args.positions_per_bar,
                               velocity_bins=args.velocity_bins)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_corpus(path: Path, scheme: Scheme) -> list[TokenSequence]:
    return read_token_text(path.read_text(encoding="utf-8"), scheme)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# -- model files


def _config_echo(cfg: RunConfig, extra: dict) -> dict:
    return {"scheme": cfg.scheme.value, "subword": cfg.subword, "target_vocab": cfg.target_vocab,
            "seed": cfg.seed, **extra}


def dump_model(model: BpeModel | UnigramModel, cfg: RunConfig, extra: dict | None = None) -> str:
    alphabet = [[tok, f"U+{cp:04X}"] for tok, cp in model.base_alphabet.entries]
    doc: dict = {"type": "bpe" if isinstance(model, BpeModel) else "unigram",
                 "scheme": model.base_alphabet.scheme.value,
                 "base_alphabet": alphabet,
                 "target_vocab": model.target_vocab}
    if isinstance(model, BpeModel):
        doc["merges"] = [list(m) for m in model.merges]
    else:
        doc["pieces"] = [{"surface": s, "log_prob": lp} for s, lp in model.pieces]
        extra = {**asdict(model.config), **(extra or {})}
    doc["config"] = _config_echo(cfg, extra or {})
    return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"


def load_model(path: Path) -> BpeModel | UnigramModel:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        scheme = Scheme(doc["scheme"])
        entries = tuple((tok, int(cp[2:], 16)) for tok, cp in doc["base_alphabet"])
        alphabet = Alphabet(entries, scheme)
        if doc["type"] == "bpe":
            return BpeModel(alphabet, tuple((l, r) for l, r in doc["merges"]), doc["target_vocab"])
        if doc["type"] == "unigram":
            conf = doc.get("config", {})
            ucfg = UnigramConfig(**{k: conf[k] for k in ("max_piece_len", "seed_size",
                                                          "em_iters_per_round", "shrink_factor")
                                    if k in conf})
            pieces = tuple((p["surface"], float(p["log_prob"])) for p in doc["pieces"])
            return UnigramModel(pieces, alphabet, doc["target_vocab"], ucfg)
        raise ValueError(f"unknown model type {doc['type']!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: not a valid model file ({exc})") from None


def _pieces_line(seq: SubwordSequence, model) -> str:
    surface = model.surface
    return " ".join(surface(p) for p in seq.pieces)


def _parse_pieces_line(line: str, model, song_id: str) -> SubwordSequence:
    ids = []
    for i, piece in enumerate(line.split()):
        try:
            ids.append(model.piece_id(piece))
        except KeyError:
            raise UnknownPiece(f"piece {i} ({piece!r}) is not in the model", song_id=song_id) from None
    return SubwordSequence(tuple(ids), song_id)


# -- per-song workers (module level so they pickle)


def _tokenize_file(path: Path, scheme: Scheme, cfg: TokenizerConfig) -> TokenSequence:
    try:
        score = read_midi(path)
        if scheme is Scheme.REMI:
            return tokenize_remi(quantize(score, cfg), cfg, path.stem)
        return tokenize_midilike(score, cfg, path.stem)
    except DataError as exc:
        raise type(exc)(f"{path.name}: {exc}") from None


def _encode_song(seq: TokenSequence, model) -> str:
    return _pieces_line(encode_any(encode_symbols(seq, model.base_alphabet), model), model)


def _eval_file(path: Path, bands: tuple[SiBand, ...], hop: float, max_n: int) -> dict:
    try:
        score = read_midi(path)
        row: dict = {"song_id": path.stem}
        try:
            row["H"] = pitch_class_entropy(score)
        except NoPitchedNotes:
            row["H"] = None
        try:
            row["GS"] = groove_similarity(score)
        except TooFewBars:
            row["GS"] = None
        try:
            plot = song_structure(score, hop, max_n)
            for label, band in zip(_band_labels(bands), bands):
                row[label] = structureness_indicator(plot, band)
        except DataError:
            for label in _band_labels(bands):
                row[label] = None
        return row
    except DataError as exc:
        raise type(exc)(f"{path.name}: {exc}") from None


def _band_labels(bands: Sequence[SiBand]) -> list[str]:
    if len(bands) == 3:
        return list(BAND_LABELS)
    return [b.name for b in bands]


# -- commands


def cmd_tokenize(args) -> None:
    scheme = Scheme(args.scheme)
    src = Path(args.input)
    if scheme is Scheme.EXTERNAL_TEXT:
        if not src.is_file():
            raise UsageError("the text scheme takes a token-text file as input")
        corpus = _read_corpus(src, scheme)
    else:
        cfg = _tokenizer_config(args)
        corpus = _pmap(partial(_tokenize_file, scheme=scheme, cfg=cfg), _midi_files(src), args.jobs)
    _write(args.out, write_token_text(corpus))
    if args.ids:
        Path(args.ids).write_text("".join(f"{s.song_id}\n" for s in corpus), encoding="utf-8")
    if args.alphabet:
        Path(args.alphabet).write_text(build_alphabet(corpus).dumps(), encoding="utf-8")


def cmd_detokenize(args) -> None:
    scheme = Scheme(args.scheme)
    if scheme is Scheme.EXTERNAL_TEXT:
        raise UsageError("only remi and midilike corpora can be turned back into MIDI")
    cfg = _tokenizer_config(args)
    corpus = _read_corpus(Path(args.corpus), scheme)
    ids = [s.song_id for s in corpus]
    if args.ids:
        ids = Path(args.ids).read_text(encoding="utf-8").split()
        if len(ids) != len(corpus):
            raise DataError(f"{args.ids} lists {len(ids)} ids for {len(corpus)} songs")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    decode = detokenize_remi if scheme is Scheme.REMI else detokenize_midilike
    for song_id, seq in zip(ids, corpus):
        score = decode(seq, cfg, recover=args.recover)
        (out / f"{song_id}.mid").write_bytes(write_midi(score))


def cmd_vocab_train(args) -> None:
    scheme = Scheme(args.scheme)
    corpus = _read_corpus(Path(args.corpus), scheme)
    alphabet = build_alphabet(corpus)
    symbols = [encode_symbols(s, alphabet) for s in corpus]
    cfg = RunConfig(scheme=scheme, subword=args.method, target_vocab=args.vocab_size, seed=args.seed)
    if args.method == "bpe":
        model = train_bpe(symbols, args.vocab_size, alphabet)
    else:
        ucfg = UnigramConfig(max_piece_len=args.max_piece_len, seed_size=args.seed_size,
                             em_iters_per_round=args.em_iters, shrink_factor=args.shrink)
        model = train_unigram(symbols, args.vocab_size, ucfg, alphabet)
    _write(args.out, dump_model(model, cfg))
    if args.alphabet:
        Path(args.alphabet).write_text(alphabet.dumps(), encoding="utf-8")
    size = model.vocab_size if isinstance(model, BpeModel) else len(model)
    if size < args.vocab_size:
        print(f"warning: corpus supports only {size} pieces (asked for {args.vocab_size})",
              file=sys.stderr)


def cmd_encode(args) -> None:
    model = load_model(Path(args.model))
    corpus = _read_corpus(Path(args.corpus), model.base_alphabet.scheme)
    lines = _pmap(partial(_encode_song, model=model), corpus, args.jobs)
    _write(args.out, "".join(line + "\n" for line in lines))


def cmd_decode(args) -> None:
    model = load_model(Path(args.model))
    decode = bpe_decode if isinstance(model, BpeModel) else unigram_decode
    lines = Path(args.corpus).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out = []
    for song_id, line in zip(song_ids(len(lines)), lines):
        seq = _parse_pieces_line(line, model, song_id)
        out.append(decode_symbols(decode(seq, model), model.base_alphabet))
    _write(args.out, write_token_text(out))


def _mean(values: list) -> float | None:
    present = [v for v in values if v is not None]
    return math.fsum(present) / len(present) if present else None


def cmd_eval(args) -> None:
    bands = tuple(_parse_band(b) for b in args.band) if args.band else DEFAULT_BANDS
    files = _midi_files(Path(args.input))
    rows = _pmap(partial(_eval_file, bands=bands, hop=args.hop, max_n=args.max_frames),
                 files, args.jobs)
    keys = ["H", "GS", *_band_labels(bands)]
    report = {
        "songs": rows,
        "means": {k: _mean([r[k] for r in rows]) for k in keys},
        "config": {"frame_hop_s": args.hop, "max_frames": args.max_frames,
                   "si_bands": [[b.lower_s, None if math.isinf(b.upper_s) else b.upper_s]
                                for b in bands]},
    }
    _write(args.report, json.dumps(report, indent=1) + "\n")


def _parse_band(text: str) -> SiBand:
    lower, _, upper = text.partition(",")
    try:
        return SiBand(float(lower), float(upper) if upper and upper != "inf" else math.inf)
    except ValueError as exc:
        raise UsageError(f"bad band {text!r}: {exc}") from None


def cmd_stats(args) -> None:
    scheme = Scheme(args.scheme)
    corpus = _read_corpus(Path(args.corpus), scheme)
    columns: dict[str, CorpusStats] = {"Base": avg_tokens_per_song(corpus)}
    for entry in args.model:
        name, sep, path = entry.partition("=")
        model = load_model(Path(path if sep else name))
        if not sep:
            name = "BPE" if isinstance(model, BpeModel) else "Unigram"
        symbols = [encode_symbols(s, model.base_alphabet) for s in corpus]
        encoded = _pmap(partial(encode_any, model=model), symbols, args.jobs)
        columns[name] = avg_tokens_per_song(encoded, [len(s) for s in symbols])
    if args.json:
        doc = {name: asdict(s) for name, s in columns.items()}
        Path(args.json).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    sys.stdout.write(stats_table(columns))


def cmd_scapeplot(args) -> None:
    path = Path(args.midi)
    if not path.is_file():
        raise UsageError(f"{path} is not a file")
    plot = song_structure(read_midi(path), args.hop, args.max_frames)
    render_scape_plot(plot, args.out)


def cmd_synth(args) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, score in enumerate(folk_corpus(args.songs, args.seed, args.bars)):
        (out / f"tune_{i:04d}.mid").write_bytes(write_midi(score))


# -- argument parsing


def _add_tokenizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="remi",
                   help="token representation (default: remi)")
    p.add_argument("--positions-per-bar", type=int, default=16, help="REMI grid (default: 16)")
    p.add_argument("--velocity-bins", type=int, default=32, help="velocity bins (default: 32)")


def _add_jobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--jobs", type=int, default=None,
                   help=f"worker processes (default: ${JOBS_ENV} or 1); output order never depends on it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mustok", description=__doc__.splitlines()[0].strip("`"))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tokenize", help="MIDI directory or file -> token-text corpus")
    p.add_argument("input")
    p.add_argument("--out", required=True, help="corpus file, '-' for stdout")
    p.add_argument("--ids", help="also write the song ids (file stems), one per line")
    p.add_argument("--alphabet", help="also write the corpus alphabet file")
    _add_tokenizer_flags(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize", help="token-text corpus -> one MIDI file per song")
    p.add_argument("corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ids", help="file naming the songs, one id per line (default: 000001, 000002, ...)")
    p.add_argument("--recover", action="store_true", help="skip malformed notes instead of failing")
    _add_tokenizer_flags(p)
    p.set_defaults(func=cmd_detokenize)

    p = sub.add_parser("vocab-train", help="learn a BPE or Unigram vocabulary")
    p.add_argument("corpus")
    p.add_argument("--method", choices=["bpe", "unigram"], required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--out", required=True, help="model JSON file")
    p.add_argument("--alphabet", help="also write the base alphabet file")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="remi")
    p.add_argument("--seed", type=int, default=0, help="recorded in the model; training is deterministic")
    p.add_argument("--max-piece-len", type=int, default=8, help="unigram: longest seed piece")
    p.add_argument("--seed-size", type=int, default=None, help="unigram: seed pieces (default 8x target)")
    p.add_argument("--em-iters", type=int, default=2, help="unigram: EM iterations per round")
    p.add_argument("--shrink", type=float, default=0.75, help="unigram: fraction kept per prune")
    p.set_defaults(func=cmd_vocab_train)

    p = sub.add_parser("encode", help="token-text corpus -> subword corpus")
    p.add_argument("model")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    _add_jobs(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="subword corpus -> token-text corpus")
    p.add_argument("model")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="pitch-class entropy, groove similarity and SI per song")
    p.add_argument("input", help="MIDI directory or file")
    p.add_argument("--report", required=True, help="JSON report, '-' for stdout")
    p.add_argument("--band", action="append", metavar="LO,HI",
                   help="SI band in seconds, repeatable (default: 3,8 8,15 15,inf)")
    p.add_argument("--hop", type=float, default=DEFAULT_HOP_S, help="frame hop in seconds (default: 0.5)")
    p.add_argument("--max-frames", type=int, default=MAX_FRAMES, help="SSM size cap (default: 256)")
    _add_jobs(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="tokens per song and expansion ratio table")
    p.add_argument("corpus", help="token-text corpus")
    p.add_argument("--model", action="append", default=[], metavar="[NAME=]MODEL",
                   help="subword model to compare, repeatable")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="remi")
    p.add_argument("--json", help="also write the statistics as JSON")
    _add_jobs(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("scapeplot", help="fitness scape plot of one MIDI file (CSV + PPM)")
    p.add_argument("midi")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.ppm")
    p.add_argument("--hop", type=float, default=DEFAULT_HOP_S)
    p.add_argument("--max-frames", type=int, default=MAX_FRAMES)
    p.set_defaults(func=cmd_scapeplot)

    p = sub.add_parser("synth", help="write a seeded folk-style MIDI corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--songs", type=int, default=50)
    p.add_argument("--bars", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "jobs", 1) is None:
            args.jobs = _default_jobs()
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mustok: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"mustok: {exc}", file=sys.stderr)
        return 2
    return 0
