"""Self-similarity, fitness scape plots and structureness indicators.

For a segment ``alpha`` of ``M`` frames, an optimal path family is a set of
time-disjoint paths through the columns of ``alpha`` in the self-similarity
matrix, each running from the segment's first column to its last with steps
(1,1), (1,2) or (2,1). The family with the highest total similarity is
found by dynamic programming with an "elevator" state that lets a new path
start after the previous one ends. Among equally scoring families the one
with fewer cells, then larger coverage, wins; all three quantities add up
along a path, so the tie-break is exact inside the recursion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange

from .errors import DegenerateMatrix, EmptyScore, InvalidBand
from .smf import PERCUSSION_CHANNEL, Score, ticks_to_seconds

# numba falls back to another threading layer on its own; the notice is noise
warnings.filterwarnings("ignore", message="The TBB threading layer requires", module="numba")

DEFAULT_HOP_S = 0.5
MAX_FRAMES = 256


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray  # (N, 12)
    frame_hop_s: float = DEFAULT_HOP_S

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class SimilarityMatrix:
    s: np.ndarray  # (N, N)
    frame_hop_s: float = DEFAULT_HOP_S

    @property
    def n_frames(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class Segment:
    start_frame: int
    end_frame: int

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class ScapePlot:
    """Fitness of every segment.

    ``fitness[length - 1, start]`` is defined for ``start + length <= N`` and
    NaN elsewhere. ``score``, ``cells`` and ``coverage`` describe the optimal
    path family behind each entry.
    """

    fitness: np.ndarray
    frame_hop_s: float
    score: np.ndarray | None = None
    cells: np.ndarray | None = None
    coverage: np.ndarray | None = None

    @property
    def n_frames(self) -> int:
        return self.fitness.shape[0]

    def entries(self):
        """Yield ``(center_s, length_s, fitness)`` by length, then start."""
        n, hop = self.n_frames, self.frame_hop_s
        for length in range(1, n + 1):
            for start in range(n - length + 1):
                yield ((start + length / 2) * hop, length * hop,
                       float(self.fitness[length - 1, start]))


@dataclass(frozen=True)
class SiBand:
    lower_s: float
    upper_s: float = math.inf

    def __post_init__(self) -> None:
        if not 0 < self.lower_s < self.upper_s:
            raise InvalidBand(f"band needs 0 < lower < upper, got [{self.lower_s}, {self.upper_s}]")

    @property
    def name(self) -> str:
        upper = "" if math.isinf(self.upper_s) else f"_{self.upper_s:g}"
        return f"SI_{self.lower_s:g}{upper}"


DEFAULT_BANDS = (SiBand(3, 8), SiBand(8, 15), SiBand(15))


# -- features and SSM


def feature_sequence(score: Score, frame_hop_s: float = DEFAULT_HOP_S) -> FeatureMatrix:
    """Duration-weighted pitch-class activation per frame, rows L2-normalised.

    Percussion notes are ignored. Frames where nothing sounds stay zero.
    """
    notes = [n for n in score.notes if n.channel != PERCUSSION_CHANNEL]
    if not notes:
        raise EmptyScore("score has no pitched notes")
    spans = [(ticks_to_seconds(score, n.onset_tick), ticks_to_seconds(score, n.offset_tick),
              n.pitch % 12) for n in notes]
    duration = max(end for _, end, _ in spans)
    n_frames = max(1, math.ceil(duration / frame_hop_s - 1e-9))
    frames = np.zeros((n_frames, 12))
    for start, end, pc in spans:
        first = int(start // frame_hop_s)
        last = min(int(math.ceil(end / frame_hop_s)), n_frames)
        for f in range(first, last):
            overlap = min(end, (f + 1) * frame_hop_s) - max(start, f * frame_hop_s)
            if overlap > 0:
                frames[f, pc] += overlap
    norms = np.linalg.norm(frames, axis=1)
    nonzero = norms > 0
    frames[nonzero] /= norms[nonzero, None]
    return FeatureMatrix(frames, frame_hop_s)


def compute_ssm(features: FeatureMatrix) -> SimilarityMatrix:
    """Cosine similarity between frames; silent frames are 0 everywhere."""
    f = features.frames
    if f.shape[0] < 1:
        raise DegenerateMatrix("feature matrix has no frames")
    s = f @ f.T
    s = np.clip((s + s.T) / 2, -1.0, 1.0)
    silent = ~np.any(f != 0, axis=1)
    s[silent, :] = 0.0
    s[:, silent] = 0.0
    idx = np.flatnonzero(~silent)
    s[idx, idx] = 1.0
    return SimilarityMatrix(s, features.frame_hop_s)


def downsample_ssm(ssm: SimilarityMatrix, max_n: int = MAX_FRAMES) -> SimilarityMatrix:
    """Block-mean pool an SSM to at most ``max_n`` frames.

    The pooled diagonal is reset to 1 wherever its block held any sound, so
    a segment still explains itself exactly.
    """
    n = ssm.n_frames
    if n <= max_n:
        return ssm
    edges = np.floor(np.linspace(0, n, max_n + 1)).astype(int)
    sizes = np.diff(edges)
    pooled = np.add.reduceat(np.add.reduceat(ssm.s, edges[:-1], axis=0), edges[:-1], axis=1)
    pooled /= np.outer(sizes, sizes)
    diag_blocks = np.array([np.any(ssm.s[a:b, a:b] != 0) for a, b in zip(edges[:-1], edges[1:])])
    idx = np.flatnonzero(diag_blocks)
    pooled[idx, idx] = 1.0
    return SimilarityMatrix(pooled, ssm.frame_hop_s * n / max_n)


# -- optimal path families


@njit(cache=True)
def _better(s1, c1, v1, s2, c2, v2):
    """True if (score, cells, coverage) triple 1 beats triple 2."""
    if s1 != s2:
        return s1 > s2
    if c1 != c2:
        return c1 < c2
    return v1 > v2


@njit(cache=True)
def _path_family(S, start, M):
    """Optimal family for the segment [start, start+M): (score, cells, coverage)."""
    N = S.shape[0]
    ninf = -np.inf
    # state of paths ending at (row, column) for the two previous rows
    s1 = np.full(M, ninf)
    c1 = np.zeros(M, np.int64)
    v1 = np.zeros(M, np.int64)
    s2 = np.full(M, ninf)
    c2 = np.zeros(M, np.int64)
    v2 = np.zeros(M, np.int64)
    s0 = np.empty(M)
    c0 = np.empty(M, np.int64)
    v0 = np.empty(M, np.int64)
    # elevator: best family with no path open
    es, ec, ev = 0.0, 0, 0
    for n in range(N):
        s0[0] = es + S[n, start]
        c0[0] = ec + 1
        v0[0] = ev + 1
        for m in range(1, M):
            bs, bc, bv = ninf, 0, 0
            if s1[m - 1] > ninf:
                bs, bc, bv = s1[m - 1], c1[m - 1], v1[m - 1] + 1
            if m >= 2 and s1[m - 2] > ninf and _better(s1[m - 2], c1[m - 2], v1[m - 2] + 1, bs, bc, bv):
                bs, bc, bv = s1[m - 2], c1[m - 2], v1[m - 2] + 1
            if n >= 2 and s2[m - 1] > ninf and _better(s2[m - 1], c2[m - 1], v2[m - 1] + 2, bs, bc, bv):
                bs, bc, bv = s2[m - 1], c2[m - 1], v2[m - 1] + 2
            if bs > ninf:
                s0[m] = bs + S[n, start + m]
                c0[m] = bc + 1
                v0[m] = bv
            else:
                s0[m] = ninf
                c0[m] = 0
                v0[m] = 0
        if s0[M - 1] > ninf and _better(s0[M - 1], c0[M - 1], v0[M - 1], es, ec, ev):
            es, ec, ev = s0[M - 1], c0[M - 1], v0[M - 1]
        s1, s2, s0 = s0, s1, s2
        c1, c2, c0 = c0, c1, c2
        v1, v2, v0 = v0, v1, v2
    return es, ec, ev


@njit(cache=True, parallel=True)
def _all_families(S, lengths, starts):
    N = S.shape[0]
    score = np.full((N, N), np.nan)
    cells = np.zeros((N, N), np.int64)
    coverage = np.zeros((N, N), np.int64)
    for k in prange(lengths.shape[0]):
        s, c, v = _path_family(S, starts[k], lengths[k])
        score[lengths[k] - 1, starts[k]] = s
        cells[lengths[k] - 1, starts[k]] = c
        coverage[lengths[k] - 1, starts[k]] = v
    return score, cells, coverage


def path_family(S: np.ndarray, start: int, length: int) -> tuple[float, int, int]:
    """``(score, cells, coverage)`` of the optimal family for one segment."""
    S = np.ascontiguousarray(S, dtype=np.float64)
    return _path_family(S, start, length)


def fitness_from_family(score: float, cells: int, coverage: int, length: int, n: int) -> float:
    """Harmonic mean of normalised score and coverage, with self-explanation removed."""
    if cells <= 0:
        return 0.0
    score_n = (score - length) / cells
    coverage_n = (coverage - length) / n
    if score_n <= 0 or coverage_n <= 0:
        return 0.0
    return min(1.0, 2 * score_n * coverage_n / (score_n + coverage_n))


def fitness_scape_plot(ssm: SimilarityMatrix | np.ndarray, max_n: int = MAX_FRAMES,
                       frame_hop_s: float = DEFAULT_HOP_S) -> ScapePlot:
    if not isinstance(ssm, SimilarityMatrix):
        ssm = SimilarityMatrix(np.asarray(ssm, dtype=np.float64), frame_hop_s)
    if ssm.n_frames == 0:
        raise DegenerateMatrix("similarity matrix is empty")
    ssm = downsample_ssm(ssm, max_n)
    S = np.ascontiguousarray(ssm.s, dtype=np.float64)
    n = S.shape[0]
    # longest segments first so the parallel schedule front-loads the heavy work
    lengths = np.repeat(np.arange(n, 0, -1), np.arange(1, n + 1))
    starts = np.concatenate([np.arange(n - length + 1) for length in range(n, 0, -1)])
    score, cells, coverage = _all_families(S, lengths, starts)
    fitness = np.full((n, n), np.nan)
    for length in range(1, n + 1):
        for start in range(n - length + 1):
            fitness[length - 1, start] = fitness_from_family(
                score[length - 1, start], cells[length - 1, start],
                coverage[length - 1, start], length, n)
    return ScapePlot(fitness, ssm.frame_hop_s, score, cells, coverage)


def structureness_indicator(plot: ScapePlot, band: SiBand) -> float:
    """Highest fitness among segments lasting between the band's bounds (seconds).

    An unbounded band ends at the song duration. 0 when no segment qualifies.
    """
    if not band.lower_s < band.upper_s:
        raise InvalidBand("lower bound must be below upper bound")
    n, hop = plot.n_frames, plot.frame_hop_s
    lengths = np.arange(1, n + 1) * hop
    upper = min(band.upper_s, n * hop)
    eps = 1e-9
    rows = np.flatnonzero((lengths >= band.lower_s - eps) & (lengths <= upper + eps))
    if not len(rows):
        return 0.0
    return float(np.nanmax(plot.fitness[rows]))


def song_structure(score: Score, frame_hop_s: float = DEFAULT_HOP_S,
                   max_n: int = MAX_FRAMES) -> ScapePlot:
    """Score -> features -> SSM -> scape plot."""
    return fitness_scape_plot(compute_ssm(feature_sequence(score, frame_hop_s)), max_n)


# -- rendering

# fixed colour ramp: dark blue -> purple -> brown -> yellow
_RAMP = np.array([
    [0.00, 20, 20, 60],
    [0.35, 110, 40, 120],
    [0.65, 170, 95, 45],
    [1.00, 250, 225, 80],
])
_BACKGROUND = (255, 255, 255)


def _colour(value: np.ndarray) -> np.ndarray:
    v = np.clip(value, 0.0, 1.0)
    return np.stack([np.interp(v, _RAMP[:, 0], _RAMP[:, i]) for i in (1, 2, 3)], axis=-1)


def scape_plot_image(plot: ScapePlot) -> np.ndarray:
    """RGB image, ``2N`` wide and ``N`` tall; the top row holds the longest segment."""
    n = plot.n_frames
    image = np.empty((n, 2 * n, 3), dtype=np.uint8)
    image[:] = _BACKGROUND
    for length in range(1, n + 1):
        row = n - length
        starts = np.arange(n - length + 1)
        rgb = np.rint(_colour(plot.fitness[length - 1, :n - length + 1])).astype(np.uint8)
        # a segment centred at start + length/2 covers columns 2*start+length-1 and +1
        cols = 2 * starts + length - 1
        image[row, cols] = rgb
        image[row, cols + 1] = rgb
    return image


def render_scape_plot(plot: ScapePlot, out: str | Path) -> tuple[Path, Path]:
    """Write ``<out>.csv`` and ``<out>.ppm``; identical plots give identical bytes."""
    if plot.n_frames == 0:
        raise DegenerateMatrix("nothing to render")
    out = Path(out)
    csv_path = out.with_name(out.name + ".csv")
    ppm_path = out.with_name(out.name + ".ppm")
    lines = ["center_s,length_s,fitness"]
    lines += [f"{c:.6f},{length:.6f},{f:.6f}" for c, length, f in plot.entries()]
    csv_path.write_text("\n".join(lines) + "\n", encoding="ascii")
    image = scape_plot_image(plot)
    header = f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    ppm_path.write_bytes(header + image.tobytes())
    return csv_path, ppm_path
