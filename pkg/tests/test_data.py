"""Dataset handling: parsing, synthesis, normalization, batching."""

import numpy as np
import pytest

from stagetime.data import (
    TimeSeriesDataset,
    batch_iter,
    fit_normalizer,
    longrange_rule,
    synth_generate,
)
from stagetime.errors import ConfigError, DataError, ParseError
from stagetime.ts_io import format_ts, parse_ts

GOOD_TS = """\
@problemName toy
@dimensions 2
@seriesLength 3
@equalLength true
@classLabel true yes no
@data
# a comment inside the data block
1.0,2.0,3.0:4.0,5.0,6.0:yes
-1.0,-2.0,-3.0:0.5,0.25,0.125:no
"""


class TestParser:
    def test_hand_written_fixture(self):
        ds = parse_ts(GOOD_TS)
        assert (ds.n, ds.channels, ds.length) == (2, 2, 3)
        assert ds.class_names == ("yes", "no")
        np.testing.assert_array_equal(ds.labels, [0, 1])
        np.testing.assert_allclose(ds.samples[0, 1], [4.0, 5.0, 6.0])

    def test_channel_order_preserved(self):
        ds = parse_ts(GOOD_TS)
        np.testing.assert_allclose(ds.samples[1, 0], [-1.0, -2.0, -3.0])

    def test_archive_style_headers_ignored(self):
        text = GOOD_TS.replace("@problemName toy", "@problemName toy\n@timeStamps false\n@missing false\n@univariate false")
        assert parse_ts(text).n == 2

    def test_wrong_channel_count_located(self):
        text = GOOD_TS.replace("4.0,5.0,6.0:yes", "4.0,5.0,6.0:7.0,8.0,9.0:yes")
        with pytest.raises(ParseError, match="line 8"):
            parse_ts(text)

    def test_ragged_channel_located(self):
        text = GOOD_TS.replace("4.0,5.0,6.0", "4.0,5.0")
        with pytest.raises(ParseError, match="line 8"):
            parse_ts(text)

    def test_unknown_label_located(self):
        text = GOOD_TS.replace(":no\n", ":maybe\n")
        with pytest.raises(ParseError, match="line 9.*maybe"):
            parse_ts(text)

    def test_missing_data_section(self):
        with pytest.raises(ParseError, match="@data"):
            parse_ts("@problemName x\n@dimensions 1\n@classLabel true a b\n")

    def test_variable_length_rejected(self):
        with pytest.raises(ParseError, match="equal-length"):
            parse_ts(GOOD_TS.replace("@equalLength true", "@equalLength false"))

    def test_missing_values_rejected(self):
        text = GOOD_TS.replace("1.0,2.0,3.0", "1.0,?,3.0")
        with pytest.raises(ParseError, match=r"\?"):
            parse_ts(text)

    def test_non_numeric_rejected(self):
        with pytest.raises(ParseError, match="line 8"):
            parse_ts(GOOD_TS.replace("1.0,2.0,3.0", "1.0,abc,3.0"))

    def test_empty_data_rejected(self):
        header = GOOD_TS.split("@data")[0] + "@data\n"
        with pytest.raises(ParseError, match="no data rows"):
            parse_ts(header)

    def test_crlf_accepted(self):
        ds = parse_ts(GOOD_TS.replace("\n", "\r\n"))
        assert ds.n == 2

    def test_roundtrip_is_value_exact(self):
        ds = synth_generate("multiscale-motif", 6, 2, 20, 2, seed=5)
        again = parse_ts(format_ts(ds))
        np.testing.assert_array_equal(again.samples, ds.samples)
        np.testing.assert_array_equal(again.labels, ds.labels)
        assert again.class_names == ds.class_names


class TestSynth:
    def test_deterministic_per_seed(self):
        a = synth_generate("multiscale-motif", 10, 2, 40, 3, seed=7)
        b = synth_generate("multiscale-motif", 10, 2, 40, 3, seed=7)
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_different_seed_differs(self):
        a = synth_generate("multiscale-motif", 10, 2, 40, 3, seed=7)
        b = synth_generate("multiscale-motif", 10, 2, 40, 3, seed=8)
        assert not np.array_equal(a.samples, b.samples)

    @pytest.mark.parametrize("kind", ["multiscale-motif", "order-motif", "longrange"])
    def test_label_balance(self, kind):
        ds = synth_generate(kind, 11, 1, 64, 2, seed=1)
        counts = np.bincount(ds.labels, minlength=2)
        assert abs(int(counts[0]) - int(counts[1])) <= 1

    def test_longrange_rule(self):
        assert longrange_rule(+1.0, +1.0) == 0
        assert longrange_rule(-1.0, -1.0) == 0
        assert longrange_rule(+1.0, -1.0) == 1
        assert longrange_rule(-1.0, +1.0) == 1

    def test_longrange_markers_match_labels_at_zero_noise(self):
        ds = synth_generate("longrange", 50, 2, 64, 2, seed=3, noise=0.0)
        for i in range(ds.n):
            rule = longrange_rule(ds.samples[i, 0, 0], ds.samples[i, 0, -1])
            assert rule == ds.labels[i]

    def test_multiscale_separable_by_template_matching(self):
        # brute-force nearest-motif matcher must be perfect at zero noise
        classes, l = 3, 64
        ds = synth_generate("multiscale-motif", 30, 2, l, classes, seed=9, noise=0.0)
        widths = [4 * (c + 1) for c in range(classes)]
        templates = []
        for w in widths:
            templates.append(3.0 * np.sin(np.pi * (np.arange(w) + 0.5) / w))
        hits = 0
        for i in range(ds.n):
            x = ds.samples[i, 0]
            best, best_score = None, -np.inf
            for c, tpl in enumerate(templates):
                w = widths[c]
                for pos in range(l - w + 1):
                    seg = x[pos : pos + w]
                    score = -np.sum((seg - tpl) ** 2) - np.sum(np.delete(x, slice(pos, pos + w)) ** 2)
                    if score > best_score:
                        best_score, best = score, c
            hits += best == ds.labels[i]
        assert hits == ds.n

    def test_order_motif_requires_two_classes(self):
        with pytest.raises(ConfigError):
            synth_generate("order-motif", 10, 1, 64, 3, seed=0)

    def test_too_short_series_rejected(self):
        with pytest.raises(ConfigError):
            synth_generate("multiscale-motif", 4, 1, 6, 4, seed=0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            synth_generate("nope", 4, 1, 32, 2, seed=0)


class TestNormalizer:
    def test_constant_channel_floored(self):
        samples = np.ones((4, 2, 5), dtype=np.float32)
        ds = TimeSeriesDataset("const", samples, np.zeros(4, dtype=np.int64), ("a", "b"))
        norm = fit_normalizer(ds)
        out = norm.apply(ds)
        np.testing.assert_allclose(out.samples, 0.0, atol=1e-5)

    def test_own_training_set_centered(self):
        ds = synth_generate("multiscale-motif", 20, 3, 32, 2, seed=2)
        out = fit_normalizer(ds).apply(ds)
        assert np.abs(out.samples.mean(axis=(0, 2))).max() < 1e-5

    def test_apply_invert_roundtrip(self):
        ds = synth_generate("multiscale-motif", 12, 3, 32, 2, seed=4)
        norm = fit_normalizer(ds)
        back = norm.invert(norm.apply(ds))
        np.testing.assert_allclose(back.samples, ds.samples, atol=1e-5)

    def test_labels_and_order_untouched(self):
        ds = synth_generate("multiscale-motif", 12, 3, 32, 2, seed=4)
        out = fit_normalizer(ds).apply(ds)
        np.testing.assert_array_equal(out.labels, ds.labels)
        assert out.class_names == ds.class_names


class TestBatchIter:
    @pytest.fixture
    def ds(self):
        return synth_generate("multiscale-motif", 5, 2, 24, 2, seed=0)

    def test_batch_sizes(self, ds):
        sizes = [len(y) for _, y in batch_iter(ds, 2)]
        assert sizes == [2, 2, 1]

    def test_unshuffled_keeps_order(self, ds):
        labels = np.concatenate([y for _, y in batch_iter(ds, 2)])
        np.testing.assert_array_equal(labels, ds.labels)

    def test_shuffle_deterministic_per_seed(self, ds):
        a = np.concatenate([y for _, y in batch_iter(ds, 2, shuffle=True, seed=3)])
        b = np.concatenate([y for _, y in batch_iter(ds, 2, shuffle=True, seed=3)])
        np.testing.assert_array_equal(a, b)

    def test_every_sample_exactly_once(self, ds):
        seen = np.concatenate([x.sum(axis=(1, 2)) for x, _ in batch_iter(ds, 2, shuffle=True, seed=1)])
        assert len(seen) == ds.n
        np.testing.assert_allclose(np.sort(seen), np.sort(ds.samples.sum(axis=(1, 2))))


class TestDatasetInvariants:
    def test_label_out_of_range_rejected(self):
        with pytest.raises(DataError):
            TimeSeriesDataset("x", np.zeros((2, 1, 3), dtype=np.float32),
                              np.array([0, 5]), ("a", "b"))

    def test_duplicate_class_names_rejected(self):
        with pytest.raises(DataError):
            TimeSeriesDataset("x", np.zeros((1, 1, 3), dtype=np.float32),
                              np.array([0]), ("a", "a"))
