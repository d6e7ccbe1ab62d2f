"""Render tunes from Ryan's Mammoth Collection (1883) to MIDI for the test corpus.

The ABC transcriptions ship with music21, which is needed only for this
script (``pip install artifact[corpus]``). Output is written to
``tests/data/folk`` and is committed, so the tests never need music21.

Usage: python scripts/build_folk_corpus.py [--songs 60] [--out tests/data/folk]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import music21

MIN_MEASURES = 8


def candidate_files() -> list[Path]:
    root = Path(music21.__file__).parent / "corpus" / "ryansMammoth"
    return sorted(root.rglob("*.abc"))


def render(path: Path) -> bytes | None:
    """MIDI bytes of a single-part tune with enough bars, otherwise ``None``."""
    try:
        score = music21.converter.parse(path)
    except Exception:  # noqa: BLE001 - the ABC parser raises many unrelated types
        return None
    if not isinstance(score, music21.stream.Score) or len(score.parts) != 1:
        return None
    if len(score.parts[0].getElementsByClass("Measure")) < MIN_MEASURES:
        return None
    try:
        return music21.midi.translate.streamToMidiFile(score).writestr()
    except music21.repeat.ExpanderException:  # malformed repeat marks
        return None


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--songs", type=int, default=60)
    parser.add_argument("--out", default="tests/data/folk")
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for path in candidate_files():
        data = render(path)
        if data is None:
            continue
        (out / f"{path.stem}.mid").write_bytes(data)
        written += 1
        if written == args.songs:
            break
    print(f"wrote {written} tunes to {out}", file=sys.stderr)
    return 0 if written == args.songs else 1


if __name__ == "__main__":
    sys.exit(main())
