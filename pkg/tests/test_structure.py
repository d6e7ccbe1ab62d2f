from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _libfmp_reference import compute_fitness_scape_plot as libfmp_scape_plot
from mustok.errors import DegenerateMatrix, EmptyScore, InvalidBand
from mustok.smf import NoteEvent, Score
from mustok.structure import (DEFAULT_BANDS, FeatureMatrix, ScapePlot, SiBand, SimilarityMatrix,
                              compute_ssm, downsample_ssm, feature_sequence, fitness_from_family,
                              fitness_scape_plot, path_family, render_scape_plot,
                              scape_plot_image, song_structure, structureness_indicator)
from support import (best_family, fitness_by_definition, motif_score, repetition_ssm)


def valid(n: int) -> np.ndarray:
    """Mask of the defined (length - 1, start) entries of an n-frame plot."""
    lengths = np.arange(1, n + 1)[:, None]
    starts = np.arange(n)[None, :]
    return starts + lengths <= n


def random_positive_ssm(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.random((n, 6))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    s = x @ x.T
    s = (s + s.T) / 2
    np.fill_diagonal(s, 1.0)
    return s


class TestFeatures:
    def test_whole_bar_c(self):
        # a 4/4 bar at 120 BPM lasts 2 s
        f = feature_sequence(Score(480, (NoteEvent(60, 80, 0, 1920),)), frame_hop_s=2.0)
        assert f.frames.shape == (1, 12)
        assert f.frames[0, 0] == 1.0 and f.frames[0, 1:].sum() == 0

    def test_silence_is_zero(self):
        f = feature_sequence(Score(480, (NoteEvent(60, 80, 0, 480), NoteEvent(62, 80, 1920, 480))))
        assert not f.frames[1:4].any()

    def test_equal_overlap_of_c_and_g(self):
        f = feature_sequence(Score(480, (NoteEvent(60, 80, 0, 480), NoteEvent(67, 80, 0, 480))))
        assert f.frames[0, 0] == pytest.approx(1 / math.sqrt(2))
        assert f.frames[0, 7] == pytest.approx(1 / math.sqrt(2))

    def test_percussion_only(self):
        with pytest.raises(EmptyScore):
            feature_sequence(Score(480, (NoteEvent(36, 80, 0, 480, 9),)))


class TestSsm:
    def test_identical_frames(self):
        f = FeatureMatrix(np.tile(np.eye(12)[3], (5, 1)))
        assert np.array_equal(compute_ssm(f).s, np.ones((5, 5)))

    def test_orthogonal_frames(self):
        assert np.array_equal(compute_ssm(FeatureMatrix(np.eye(12)[:4])).s, np.eye(4))

    def test_cosine(self):
        c = np.eye(12)[0]
        cg = (np.eye(12)[0] + np.eye(12)[7]) / math.sqrt(2)
        s = compute_ssm(FeatureMatrix(np.stack([c, cg]))).s
        assert s[0, 1] == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_silent_frame_row_and_diagonal(self):
        s = compute_ssm(FeatureMatrix(np.stack([np.eye(12)[0], np.zeros(12)]))).s
        assert s[1].tolist() == [0.0, 0.0]
        assert s[0, 0] == 1.0

    def test_symmetry_on_real_music(self):
        s = compute_ssm(feature_sequence(motif_score(3))).s
        assert np.max(np.abs(s - s.T)) <= 1e-12

    def test_downsampling(self):
        s = SimilarityMatrix(np.ones((10, 10)))
        small = downsample_ssm(s, 4)
        assert small.n_frames == 4
        assert np.allclose(small.s, 1.0)
        assert small.frame_hop_s == pytest.approx(0.5 * 10 / 4)

    def test_empty_matrix(self):
        with pytest.raises(DegenerateMatrix):
            fitness_scape_plot(np.zeros((0, 0)))


class TestPathFamilies:
    def test_repetition_ssm_matches_enumeration(self):
        s = repetition_ssm(8)
        plot = fitness_scape_plot(s)
        for length in range(1, 9):
            for start in range(9 - length):
                assert path_family(s, start, length) == best_family(s, start, length)
                assert plot.fitness[length - 1, start] == pytest.approx(
                    fitness_by_definition(s, start, length), abs=1e-12)

    def test_random_ssm_matches_enumeration(self):
        rng = np.random.default_rng(4)
        for _ in range(3):
            s = random_positive_ssm(rng, 6)
            for length in range(1, 7):
                for start in range(7 - length):
                    got = path_family(s, start, length)
                    want = best_family(s, start, length)
                    assert got[0] == pytest.approx(want[0], abs=1e-12)
                    assert got[1:] == want[1:]

    def test_matches_libfmp_reference(self):
        rng = np.random.default_rng(0)
        consistent_total = 0
        for n in (12, 18, 24):
            s = random_positive_ssm(rng, n)
            ref_fitness, ref_score, consistent = libfmp_scape_plot(s)
            plot = fitness_scape_plot(s)
            mask = valid(n)
            assert np.max(np.abs(plot.score[mask] - ref_score[mask])) <= 1e-12
            use = mask & consistent
            consistent_total += use.sum() / mask.sum()
            expected = np.clip(ref_fitness[use], 0.0, 1.0)
            assert np.max(np.abs(plot.fitness[use] - expected)) <= 1e-12
        # the reference's own traceback must agree with its score almost everywhere
        assert consistent_total / 3 > 0.9


class TestFitness:
    def test_single_frame(self):
        plot = fitness_scape_plot(np.ones((1, 1)))
        assert plot.fitness[0, 0] == 0.0

    def test_full_song_is_zero(self):
        plot = fitness_scape_plot(repetition_ssm(8))
        assert plot.fitness[7, 0] == 0.0

    def test_constant_music(self):
        n = 10
        plot = fitness_scape_plot(np.ones((n, n)))
        for length in range(1, n + 1):
            row = plot.fitness[length - 1, :n - length + 1]
            assert np.allclose(row, row.max())
            assert np.allclose(row, row[::-1])

    def test_repetition_beats_shuffled_frames(self):
        s = repetition_ssm(8)
        perm = np.random.default_rng(1).permutation(8)
        control = s[np.ix_(perm, perm)]
        ours = fitness_scape_plot(s)
        theirs = fitness_scape_plot(control)
        half = np.nanmax(ours.fitness[3])
        assert half > np.nanmax(theirs.fitness)

    def test_brightest_entry_is_half_length(self):
        plot = fitness_scape_plot(repetition_ssm(8))
        length, start = np.unravel_index(np.nanargmax(plot.fitness), plot.fitness.shape)
        assert length + 1 == 4
        assert plot.fitness[length, start] == pytest.approx(0.5, abs=1e-12)

    def test_harmonic_mean(self):
        # score 9 over 6 cells, coverage 6 of 10 frames, segment of 3
        assert fitness_from_family(9.0, 6, 6, 3, 10) == pytest.approx(2 * 1.0 * 0.3 / 1.3)

    def test_negative_parts_give_zero(self):
        assert fitness_from_family(2.0, 2, 5, 3, 10) == 0.0


class TestStructureness:
    def test_all_zero_plot(self):
        plot = ScapePlot(np.zeros((20, 20)), 0.5)
        assert all(structureness_indicator(plot, b) == 0.0 for b in DEFAULT_BANDS)

    def test_band_longer_than_song(self):
        plot = ScapePlot(np.ones((20, 20)), 0.5)  # 10 s
        assert structureness_indicator(plot, SiBand(15)) == 0.0

    def test_band_selects_rows(self):
        fitness = np.zeros((20, 20))
        fitness[9, 0] = 0.7  # 5 s segment
        fitness[19, 0] = 0.9  # 10 s segment
        plot = ScapePlot(fitness, 0.5)
        assert structureness_indicator(plot, SiBand(3, 8)) == 0.7
        assert structureness_indicator(plot, SiBand(8, 15)) == 0.9

    def test_invalid_band(self):
        with pytest.raises(InvalidBand):
            SiBand(8, 3)

    def test_repeated_motif_beats_shuffle(self):
        band = SiBand(3, 8)
        motif = structureness_indicator(song_structure(motif_score(0)), band)
        control = structureness_indicator(song_structure(motif_score(0, shuffled=True)), band)
        assert motif >= 0.5
        assert motif > control


class TestRendering:
    def test_single_entry_csv(self, tmp_path):
        csv, _ = render_scape_plot(fitness_scape_plot(np.ones((1, 1))), tmp_path / "one")
        assert csv.read_text().splitlines() == ["center_s,length_s,fitness",
                                                "0.250000,0.500000,0.000000"]

    def test_deterministic_bytes(self, tmp_path):
        plot = song_structure(motif_score(2))
        a = render_scape_plot(plot, tmp_path / "a")
        b = render_scape_plot(plot, tmp_path / "b")
        for x, y in zip(a, b):
            assert x.read_bytes() == y.read_bytes()

    def test_image_layout(self, tmp_path):
        plot = fitness_scape_plot(repetition_ssm(8))
        image = scape_plot_image(plot)
        assert image.shape == (8, 16, 3)
        # top row is the full-song segment, centred
        assert image[0, 7].tolist() == image[0, 8].tolist() != [255, 255, 255]
        assert image[0, 0].tolist() == [255, 255, 255]
        _, ppm = render_scape_plot(plot, tmp_path / "r")
        assert ppm.read_bytes().startswith(b"P6\n16 8\n255\n")
        # the brightest painted pixel sits in the half-length row
        brightness = np.where((image == 255).all(axis=2), 0, image.astype(int).sum(axis=2))
        row = np.unravel_index(np.argmax(brightness), brightness.shape)[0]
        assert 8 - row == 4


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_fitness_in_unit_interval(n, seed):
    s = random_positive_ssm(np.random.default_rng(seed), n)
    f = fitness_scape_plot(s).fitness[valid(n)]
    assert np.all((f >= 0) & (f <= 1))
    assert fitness_scape_plot(s).fitness[n - 1, 0] == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**16), st.integers(1, 11))
def test_si_band_inclusion_and_transposition(seed, shift):
    score = motif_score(seed, repeats=3, motif_s=4.0)
    plot = song_structure(score)
    inner, outer = SiBand(4, 6), SiBand(3, 8)
    assert structureness_indicator(plot, inner) <= structureness_indicator(plot, outer)
    up = Score(score.division, tuple(NoteEvent(n.pitch + shift, n.velocity, n.onset_tick,
                                               n.duration_tick) for n in score.notes),
               score.tempo_map)
    moved = song_structure(up)
    for band in DEFAULT_BANDS:
        assert structureness_indicator(moved, band) == pytest.approx(
            structureness_indicator(plot, band), abs=1e-12)
