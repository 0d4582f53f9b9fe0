"""Pseudo-writer corpus generation and manifest round-trips."""

import numpy as np
import pytest

from handiff.corpus import (
    CorpusSpec,
    LabeledSample,
    ManifestRecord,
    WriterStyle,
    apply_writer_distortion,
    corpus_checksum,
    derived_rng,
    generate_pseudo_corpus,
    load_samples,
    make_sample,
    read_manifest,
    save_samples,
    write_manifest,
)
from handiff.errors import AspectError, ManifestError
from handiff.glyphs import Canvas, render_to_canvas


def _fit_shear(img: np.ndarray) -> float:
    """Shear estimate from second-order image moments (x drift per y)."""
    ys, xs = np.mgrid[: img.shape[0], : img.shape[1]]
    m = img.sum()
    xbar, ybar = (img * xs).sum() / m, (img * ys).sum() / m
    mu11 = (img * (xs - xbar) * (ys - ybar)).sum() / m
    mu02 = (img * (ys - ybar) ** 2).sum() / m
    return -mu11 / mu02


SPEC = CorpusSpec(lexicon=("hand", "script", "note"), writers=(0, 1), canvas=Canvas(32))


class TestGeneration:
    def test_reproducible_checksum(self):
        a = generate_pseudo_corpus(SPEC, rng_seed=5)
        b = generate_pseudo_corpus(SPEC, rng_seed=5)
        assert corpus_checksum(a) == corpus_checksum(b)
        c = generate_pseudo_corpus(SPEC, rng_seed=6)
        assert corpus_checksum(a) != corpus_checksum(c)

    def test_identity_style_equals_normalized_glyph(self):
        sample = make_sample("plain", 3, 0, canvas=Canvas(32), style=WriterStyle.identity())
        expected = render_to_canvas("plain", Canvas(32)).pixels
        np.testing.assert_array_equal(sample.image, expected)

    def test_writers_have_distinct_slants(self):
        styles = {w: WriterStyle.from_seed(w, 0) for w in range(8)}
        lo = min(styles, key=lambda w: styles[w].slant)
        hi = max(styles, key=lambda w: styles[w].slant)
        assert styles[hi].slant - styles[lo].slant > 0.2

        def mean_fit(writer):
            fits = [
                _fit_shear(make_sample(word, writer, 0, canvas=Canvas(32)).image)
                for word in ("hello", "mind", "torn")
            ]
            return float(np.mean(fits))

        diff = mean_fit(hi) - mean_fit(lo)
        assert diff > 0.0

    def test_canvas_shape_and_domain(self):
        for s in generate_pseudo_corpus(SPEC, rng_seed=1):
            assert s.image.shape == (32, 256)
            assert s.image.dtype == np.float32
            assert 0.0 <= s.image.min() and s.image.max() <= 1.0

    def test_aspect_violation_lists_offenders(self):
        bad = CorpusSpec(lexicon=("ok", "strawberry"), writers=(0,), canvas=Canvas(32))
        with pytest.raises(AspectError, match="strawberry"):
            generate_pseudo_corpus(bad, rng_seed=0)

    def test_explicit_pairs(self):
        spec = CorpusSpec(
            lexicon=("one", "two"), writers=(0, 1),
            pairs=(("one", 1), ("two", 0)), canvas=Canvas(16),
        )
        out = generate_pseudo_corpus(spec, rng_seed=0)
        assert [(s.text, s.writer_id) for s in out] == [("one", 1), ("two", 0)]

    def test_samples_are_order_independent(self):
        # per-pair seed derivation: generating a subset matches the full run
        full = generate_pseudo_corpus(SPEC, rng_seed=9)
        solo = make_sample("script", 1, 9, canvas=Canvas(32))
        match = [s for s in full if s.text == "script" and s.writer_id == 1]
        np.testing.assert_array_equal(match[0].image, solo.image)


class TestManifests:
    def test_round_trip(self, tmp_path):
        samples = generate_pseudo_corpus(SPEC, rng_seed=2)
        manifest = save_samples(samples, tmp_path / "corpus")
        records = read_manifest(manifest)
        assert [(r.text, r.writer) for r in records] == [
            (s.text, s.writer_id) for s in samples
        ]
        loaded = load_samples(manifest)
        np.testing.assert_allclose(loaded[0].image, samples[0].image, atol=1 / 254)

    def test_confidence_round_trip(self, tmp_path):
        recs = [ManifestRecord(image="x.png", text="hi", writer=4, confidence=0.73)]
        (tmp_path / "x.png").write_bytes(b"")
        write_manifest(recs, tmp_path / "m.jsonl")
        back = read_manifest(tmp_path / "m.jsonl", check_images=False)
        assert back == recs

    def test_missing_text_field_reports_line(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"image": "a.png", "text": "ok", "writer": 1}\n{"image": "b.png", "writer": 2}\n')
        with pytest.raises(ManifestError, match="line 2"):
            read_manifest(p, check_images=False)

    def test_malformed_json_reports_line(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"image": "a.png", "text": "ok", "writer": 1}\nnot json\n')
        with pytest.raises(ManifestError, match="line 2"):
            read_manifest(p, check_images=False)

    def test_unknown_field_rejected(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"image": "a.png", "text": "ok", "writer": 1, "extra": 2}\n')
        with pytest.raises(ManifestError, match="extra"):
            read_manifest(p, check_images=False)

    def test_empty_manifest(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text("")
        assert read_manifest(p) == []

    def test_missing_image_file(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"image": "gone.png", "text": "ok", "writer": 1}\n')
        with pytest.raises(FileNotFoundError):
            read_manifest(p)


def test_distortion_identity_is_exact():
    img = np.random.default_rng(0).random((7, 29)).astype(np.float32)
    out = apply_writer_distortion(img, WriterStyle.identity(), derived_rng(1))
    np.testing.assert_array_equal(out, img)
