"""Generator tests: placement rules, rasterization oracle, dataset and corpus fidelity."""

import math

import numpy as np
import pytest

from glab import synthgen, vision
from glab.errors import CapacityError, InvalidArgumentError
from glab.seeds import derive_seed


def test_empty_scene_rasterizes_white():
    scene = synthgen.CircleScene([], 16, 16)
    img = synthgen.rasterize(scene)
    assert np.all(img.values == 1.0)


def test_scene_counts_via_counter_oracle():
    rng = np.random.default_rng(3)
    scene = synthgen.gen_circle_scene(2, (32, 32), (3, 5), rng)
    count, _ = vision.count_circles(synthgen.rasterize(scene))
    assert count == 2


def test_capacity_error_for_infeasible_count():
    rng = np.random.default_rng(0)
    with pytest.raises(CapacityError):
        synthgen.gen_circle_scene(200, (32, 32), (3, 5), rng)


def test_scene_nonoverlap_invariant():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        scene = synthgen.gen_circle_scene(8, (32, 32), (2, 4), rng)
        cs = scene.circles
        for i in range(len(cs)):
            for j in range(i + 1, len(cs)):
                dist = math.hypot(cs[i].cx - cs[j].cx, cs[i].cy - cs[j].cy)
                assert dist > cs[i].r + cs[j].r + 1.0


def test_scene_circles_inside_canvas():
    rng = np.random.default_rng(1)
    scene = synthgen.gen_circle_scene(6, (32, 32), (2, 4), rng)
    for c in scene.circles:
        assert c.r <= c.cx <= 31 - c.r
        assert c.r <= c.cy <= 31 - c.r


def test_rasterize_single_circle_pixel_distances():
    scene = synthgen.CircleScene([synthgen.Circle(16.0, 16.0, 3.0)], 32, 32)
    img = synthgen.rasterize(scene)
    for y in range(32):
        for x in range(32):
            inside = (x - 16.0) ** 2 + (y - 16.0) ** 2 <= 9.0
            assert img.values[y, x] == (0.0 if inside else 1.0)


def test_rasterize_deterministic():
    rng = np.random.default_rng(5)
    scene = synthgen.gen_circle_scene(4, (32, 32), (2, 4), rng)
    assert np.array_equal(synthgen.rasterize(scene).values, synthgen.rasterize(scene).values)


def test_dataset_counts_only_from_distribution():
    spec = synthgen.DatasetSpec({2: 0.5, 10: 0.5}, 300, seed=21)
    data = synthgen.gen_image_dataset(spec)
    assert {c for _, c in data} <= {2, 10}


def test_dataset_single_count():
    spec = synthgen.DatasetSpec({3: 1.0}, 10, seed=4)
    data = synthgen.gen_image_dataset(spec)
    assert all(c == 3 for _, c in data)


def test_dataset_proportions_within_three_sigma():
    n = 1000
    spec = synthgen.DatasetSpec({2: 0.5, 10: 0.5}, n, seed=8)
    data = synthgen.gen_image_dataset(spec)
    frac2 = sum(1 for _, c in data if c == 2) / n
    assert abs(frac2 - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_dataset_reproducible():
    spec = synthgen.DatasetSpec({2: 1.0}, 20, seed=99)
    a = synthgen.gen_image_dataset(spec)
    b = synthgen.gen_image_dataset(spec)
    for (ia, ca), (ib, cb) in zip(a, b):
        assert ca == cb and np.array_equal(ia.values, ib.values)


def test_dataset_validates_proportions():
    with pytest.raises(InvalidArgumentError):
        synthgen.DatasetSpec({2: 0.6, 10: 0.6}, 10).validate()


def test_counting_consistency_over_many_scenes():
    # rasterize/count agreement for random scenes with radius >= 2
    for i in range(50):
        rng = np.random.default_rng(derive_seed(31337, f"consistency/{i}"))
        want = int(rng.integers(0, 11))
        scene = synthgen.gen_circle_scene(want, (32, 32), (2, 4), rng)
        count, _ = vision.count_circles(synthgen.rasterize(scene))
        assert count == want


def test_pgm_roundtrip(tmp_path):
    rng = np.random.default_rng(17)
    img = synthgen.rasterize(synthgen.gen_circle_scene(3, (32, 32), (2, 4), rng))
    path = tmp_path / "img.pgm"
    synthgen.write_pgm(img, path)
    back = synthgen.read_pgm(path)
    # binary renders survive the 8-bit quantization exactly
    assert np.array_equal(back.values, img.values)


def test_image_dataset_persistence_roundtrip(tmp_path):
    spec = synthgen.DatasetSpec({2: 0.5, 10: 0.5}, 12, seed=3)
    data = synthgen.gen_image_dataset(spec)
    synthgen.write_image_dataset(data, spec, tmp_path)
    back = synthgen.read_image_dataset(tmp_path)
    assert len(back) == 12
    for (ia, ca), (ib, cb) in zip(data, back):
        assert ca == cb and np.array_equal(ia.values, ib.values)


# --- corpus ---------------------------------------------------------------


def test_corpus_rates_match_ladder():
    ladder = synthgen.default_ladder()
    corpus = synthgen.gen_idiom_corpus(ladder, synthgen.FILLER_VOCAB, 2000, seed=5)
    for idiom in ladder:
        rate, n = synthgen.empirical_completion_rate(corpus, idiom)
        assert n > 0
        bound = 3 * math.sqrt(idiom.frequency * (1 - idiom.frequency) / n) + 1.0 / n
        assert abs(rate - idiom.frequency) <= max(bound, 1.0 / n)


def test_corpus_frequency_one_always_completes():
    ladder = [synthgen.IdiomSpec(("kick", "the"), "bucket", 1.0, ("road",))]
    corpus = synthgen.gen_idiom_corpus(ladder, synthgen.FILLER_VOCAB, 300, seed=6)
    rate, n = synthgen.empirical_completion_rate(corpus, ladder[0])
    assert n > 0 and rate == 1.0


def test_corpus_empty_ladder_rejected():
    with pytest.raises(InvalidArgumentError):
        synthgen.gen_idiom_corpus([], synthgen.FILLER_VOCAB, 100, seed=0)


def test_corpus_deterministic_and_sentences_nonempty():
    ladder = synthgen.default_ladder()
    a = synthgen.gen_idiom_corpus(ladder, synthgen.FILLER_VOCAB, 500, seed=9)
    b = synthgen.gen_idiom_corpus(ladder, synthgen.FILLER_VOCAB, 500, seed=9)
    assert a.sentences == b.sentences
    assert len(a.sentences) == 500
    assert all(a.sentences)


def test_corpus_file_roundtrip(tmp_path):
    corpus = synthgen.gen_idiom_corpus(
        synthgen.default_ladder(), synthgen.FILLER_VOCAB, 50, seed=2
    )
    path = tmp_path / "corpus.txt"
    synthgen.write_corpus(corpus, path)
    back = synthgen.read_corpus(path)
    assert back.sentences == corpus.sentences
