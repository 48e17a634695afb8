"""Raster I/O, palette mapping, tiling/stitching, synthetic corpus."""

import json

import numpy as np
import pytest

from lkaseg.data_io import (IGNORE_LABEL, RasterError, default_palette,
                            load_corpus, read_pgm, read_ppm, stitch,
                            synth_generate, synth_sample, tile, write_pgm,
                            write_ppm)


class TestPpmPgm:
    def test_ppm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (17, 23, 3)).astype(np.uint8)
        p = tmp_path / "x.ppm"
        write_ppm(p, img)
        np.testing.assert_array_equal(read_ppm(p), img)

    def test_pgm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (9, 5)).astype(np.uint8)
        p = tmp_path / "x.pgm"
        write_pgm(p, img)
        np.testing.assert_array_equal(read_pgm(p), img)

    def test_2x2_file_size(self, tmp_path):
        p = tmp_path / "t.ppm"
        write_ppm(p, np.zeros((2, 2, 3), dtype=np.uint8))
        raw = p.read_bytes()
        assert raw.startswith(b"P6\n2 2\n255\n")
        assert len(raw) == 11 + 12

    def test_ascii_p3_rejected(self, tmp_path):
        p = tmp_path / "a.ppm"
        p.write_bytes(b"P3\n2 2\n255\n0 0 0 0 0 0 0 0 0 0 0 0\n")
        with pytest.raises(RasterError, match="P3"):
            read_ppm(p)

    def test_truncated_payload_names_offset(self, tmp_path):
        p = tmp_path / "t.ppm"
        write_ppm(p, np.zeros((4, 4, 3), dtype=np.uint8))
        raw = p.read_bytes()
        p.write_bytes(raw[:-5])
        with pytest.raises(RasterError, match="byte"):
            read_ppm(p)

    def test_bad_maxval(self, tmp_path):
        p = tmp_path / "m.ppm"
        p.write_bytes(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")
        with pytest.raises(RasterError):
            read_ppm(p)

    def test_comments_tolerated(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# a comment\n1 1\n255\n\x01\x02\x03")
        np.testing.assert_array_equal(read_ppm(p), [[[1, 2, 3]]])


class TestPalette:
    def test_default_lookups(self):
        pal = default_palette()
        raster = np.array([[[255, 255, 255], [255, 0, 0]],
                           [[0, 0, 255], [255, 255, 0]]], dtype=np.uint8)
        labels = pal.decode(raster)
        assert labels[0, 0] == 0       # white -> impervious surface
        assert labels[1, 0] == 1       # blue -> building
        assert labels[1, 1] == 4       # yellow -> car
        assert labels[0, 1] == 5       # red -> clutter
        assert pal.names()[0] == "impervious_surface"
        assert pal.names()[5] == "clutter"

    def test_clutter_to_ignore_mapping(self):
        pal = default_palette()
        raster = np.array([[[255, 0, 0]]], dtype=np.uint8)
        labels = pal.decode(raster)
        labels = np.where(labels == 5, IGNORE_LABEL, labels)
        assert labels[0, 0] == IGNORE_LABEL

    def test_round_trip_on_palette_pure_raster(self, rng):
        pal = default_palette()
        labels = rng.integers(0, 6, (8, 8))
        raster = pal.encode(labels)
        np.testing.assert_array_equal(pal.decode(raster), labels)
        np.testing.assert_array_equal(pal.encode(pal.decode(raster)), raster)

    def test_unknown_color_strict(self):
        pal = default_palette()
        with pytest.raises(RasterError):
            pal.decode(np.array([[[7, 7, 7]]], dtype=np.uint8))


class TestTileStitch:
    def test_exact_partition_no_averaging(self, rng):
        img = rng.integers(0, 256, (128, 128, 3)).astype(np.uint8)
        labels = rng.integers(0, 6, (128, 128))
        tiles, layout = tile(img, labels, tile_size=64, stride=64)
        assert len(tiles) == 4
        logits = [np.stack([(lab == c).astype(np.float32) for c in range(6)])
                  for _, lab in tiles]
        full = stitch(logits, layout)
        np.testing.assert_array_equal(full.argmax(axis=0), labels)

    def test_overlap_coverage_oracle(self, rng):
        h, w, ts, stride = 96, 100, 64, 32
        img = rng.integers(0, 256, (h, w, 3)).astype(np.uint8)
        labels = rng.integers(0, 3, (h, w))
        tiles, layout = tile(img, labels, tile_size=ts, stride=stride)
        ones = [np.ones((1, ts, ts), dtype=np.float32) for _ in tiles]
        # stitch averages, so all-ones tiles must stitch to exactly ones
        full = stitch(ones, layout)
        np.testing.assert_allclose(full, 1.0)
        # coverage oracle: every padded pixel hit at least once, some twice
        cover = np.zeros(layout.padded_hw)
        for (y, x) in layout.positions:
            cover[y:y + ts, x:x + ts] += 1
        assert cover.min() >= 1
        assert cover.max() > 1  # overlapping stride really overlaps

    def test_logits_round_trip_with_overlap(self, rng):
        h, w = 96, 96
        img = rng.integers(0, 256, (h, w, 3)).astype(np.uint8)
        labels = rng.integers(0, 4, (h, w))
        tiles, layout = tile(img, labels, tile_size=64, stride=32)
        logits = [np.stack([(lab == c).astype(np.float32) for c in range(4)])
                  for _, lab in tiles]
        full = stitch(logits, layout)
        np.testing.assert_array_equal(full.argmax(axis=0), labels)

    def test_order_independence(self, rng):
        img = rng.integers(0, 256, (96, 96, 3)).astype(np.uint8)
        labels = rng.integers(0, 3, (96, 96))
        tiles, layout = tile(img, labels, tile_size=64, stride=32)
        logits = [rng.random((3, 64, 64)).astype(np.float32) for _ in tiles]
        full = stitch(logits, layout)
        # stitching is positional: identical inputs give identical outputs
        np.testing.assert_array_equal(full, stitch(list(logits), layout))

    def test_tile_too_large(self, rng):
        img = rng.integers(0, 256, (32, 32, 3)).astype(np.uint8)
        with pytest.raises(RasterError):
            tile(img, np.zeros((32, 32), dtype=int), tile_size=128, stride=128)


class TestSynthCorpus:
    def test_sample_determinism(self):
        img_a, lab_a = synth_sample(seed=5, index=2, size=64, num_classes=6)
        img_b, lab_b = synth_sample(seed=5, index=2, size=64, num_classes=6)
        np.testing.assert_array_equal(img_a, img_b)
        np.testing.assert_array_equal(lab_a, lab_b)
        _, lab_c = synth_sample(seed=6, index=2, size=64, num_classes=6)
        assert not np.array_equal(lab_a, lab_c)

    def test_generate_byte_identical(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        synth_generate(d1, seed=3, count=4, size=64, num_classes=6)
        synth_generate(d2, seed=3, count=4, size=64, num_classes=6)
        for sub in ("images", "labels"):
            for f1 in sorted((d1 / sub).iterdir()):
                f2 = d2 / sub / f1.name
                assert f1.read_bytes() == f2.read_bytes()
        assert json.loads((d1 / "manifest.json").read_text()) == \
            json.loads((d2 / "manifest.json").read_text())

    def test_every_class_has_pixel_share(self):
        counts = np.zeros(6)
        total = 0
        for i in range(100):
            _, labels = synth_sample(seed=11, index=i, size=64, num_classes=6)
            counts += np.bincount(labels.ravel(), minlength=6)
            total += labels.size
        assert np.all(counts / total >= 0.01)

    def test_noise_free_is_palette_pure(self):
        pal = default_palette()
        raster, labels = synth_sample(seed=1, index=0, size=64, num_classes=6,
                                      noise_sigma=0.0)
        np.testing.assert_array_equal(pal.decode(raster), labels)

    def test_load_corpus(self, tmp_path):
        d = tmp_path / "c"
        synth_generate(d, seed=9, count=3, size=64, num_classes=6)
        samples, manifest = load_corpus(d)
        assert manifest["count"] == 3
        assert len(samples) == 3
        for s in samples:
            assert s.image.shape == (1, 3, 64, 64)
            assert s.image.data.min() >= 0.0 and s.image.data.max() <= 1.0
            valid = s.labels[s.labels != IGNORE_LABEL]
            assert valid.max() < 6

    def test_load_corpus_with_ignored_class(self, tmp_path):
        d = tmp_path / "c"
        synth_generate(d, seed=9, count=2, size=64, num_classes=6)
        samples, _ = load_corpus(d, ignore_classes=(5,))
        assert all(5 not in s.labels for s in samples)
        assert any(IGNORE_LABEL in s.labels for s in samples)
