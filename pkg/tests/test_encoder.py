import numpy as np
import pytest

from coordkit.errors import ConfigError, EncoderLengthError, SchemaError
from coordkit.encoder import (
    MARKER,
    DetectorInstance,
    ExternalEncoder,
    HashedEncoder,
    build_detector_instance,
    build_encoder,
    concat_position,
    flag_dim,
    insert_markers,
    position_flags,
    project_gold_to_marked,
    project_labels_to_original,
    strip_markers,
)
from coordkit.schema import (
    CoordinatorSpan,
    DetectorLabel,
    SpanKind,
    TokenSpan,
    make_tokens,
)

O = DetectorLabel.O
C = DetectorLabel.C
BB = DetectorLabel.B_BEFORE
BA = DetectorLabel.B_AFTER


def tokens_of_length(n):
    return make_tokens([f"w{i}" for i in range(n)])


class TestMarkers:
    def test_mid_sentence_target(self):
        marked = insert_markers(tokens_of_length(10), CoordinatorSpan(TokenSpan(7, 8)))
        assert len(marked) == 12
        assert marked.marker_positions() == (7, 9)
        assert marked.texts[7] == MARKER and marked.texts[9] == MARKER
        assert marked.target_marked == TokenSpan(8, 9)

    def test_sentence_start_target(self):
        marked = insert_markers(tokens_of_length(5), CoordinatorSpan(TokenSpan(0, 1)))
        assert marked.marker_positions() == (0, 2)

    def test_two_token_target(self):
        target = CoordinatorSpan(TokenSpan(3, 5), SpanKind.PAIRED_RIGHT, partner=TokenSpan(0, 1))
        marked = insert_markers(tokens_of_length(8), target)
        first, second = marked.marker_positions()
        assert second - first == 3

    def test_out_of_bounds(self):
        with pytest.raises(SchemaError):
            insert_markers(tokens_of_length(3), CoordinatorSpan(TokenSpan(2, 4)))

    def test_strip_round_trip(self):
        tokens = make_tokens(["a", "b", "and", "c"])
        marked = insert_markers(tokens, CoordinatorSpan(TokenSpan(2, 3)))
        assert strip_markers(marked) == tokens

    def test_origin_map_has_two_markers(self):
        marked = insert_markers(tokens_of_length(6), CoordinatorSpan(TokenSpan(2, 3)))
        assert marked.origin_map.count(None) == 2


class TestLabelProjection:
    def test_gold_to_marked_and_back(self):
        tokens = make_tokens(["a", "and", "b"])
        target = CoordinatorSpan(TokenSpan(1, 2))
        marked = insert_markers(tokens, target)
        gold = [BB, C, BA]
        marked_gold = project_gold_to_marked(marked, gold)
        assert marked_gold == [BB, O, C, O, BA]
        assert project_labels_to_original(marked, marked_gold) == gold

    def test_length_mismatch(self):
        marked = insert_markers(tokens_of_length(3), CoordinatorSpan(TokenSpan(1, 2)))
        with pytest.raises(SchemaError):
            project_labels_to_original(marked, [O, O])


class TestPositionFlags:
    def test_single_target(self):
        target = CoordinatorSpan(TokenSpan(1, 2))
        marked = insert_markers(tokens_of_length(3), target)
        flags = position_flags(marked, [target])
        assert flags.shape == (5, 1)
        # Markers at 1 and 3, target token at 2.
        assert flags[:, 0].tolist() == [0.0, 0.0, 1.0, 0.0, 0.0]

    def test_multiple_coordinators(self):
        coords = [
            CoordinatorSpan(TokenSpan(2, 3)),
            CoordinatorSpan(TokenSpan(8, 9)),
            CoordinatorSpan(TokenSpan(10, 11), SpanKind.RESPECTIVELY),
        ]
        marked = insert_markers(tokens_of_length(12), coords[2])
        flags = position_flags(marked, coords)
        origins_flagged = {
            marked.origin_map[i] for i in range(len(marked)) if flags[i, 0] == 1.0
        }
        assert origins_flagged == {2, 8, 10}

    def test_empty_list_all_zero(self):
        marked = insert_markers(tokens_of_length(4), CoordinatorSpan(TokenSpan(1, 2)))
        assert not position_flags(marked, []).any()

    def test_order_invariance(self):
        coords = [CoordinatorSpan(TokenSpan(1, 2)), CoordinatorSpan(TokenSpan(3, 4))]
        marked = insert_markers(tokens_of_length(6), coords[0])
        a = position_flags(marked, coords)
        b = position_flags(marked, list(reversed(coords)))
        assert np.array_equal(a, b)

    def test_kind_mode(self):
        target = CoordinatorSpan(TokenSpan(1, 2), SpanKind.RESPECTIVELY)
        marked = insert_markers(tokens_of_length(3), target)
        flags = position_flags(marked, [target], flag_mode="kind")
        assert flags.shape == (5, flag_dim("kind"))
        assert flags[2, 3] == 1.0 and flags[2].sum() == 1.0


class TestHashedEncoder:
    def test_shape(self):
        enc = HashedEncoder(dim=64)
        marked = insert_markers(tokens_of_length(10), CoordinatorSpan(TokenSpan(7, 8)))
        out = enc.encode(marked)
        assert out.shape == (12, 64)
        assert np.isfinite(out).all()

    def test_deterministic(self):
        enc = HashedEncoder(dim=96, window=2)
        tokens = make_tokens("My sister likes apples and pears .".split())
        a = enc.encode(tokens)
        b = enc.encode(tokens)
        assert np.array_equal(a, b)

    def test_marker_dedicated_slot(self):
        enc = HashedEncoder(dim=32)
        marked = insert_markers(tokens_of_length(3), CoordinatorSpan(TokenSpan(1, 2)))
        out = enc.encode(marked)
        first, second = marked.marker_positions()
        for pos in (first, second):
            assert out[pos, -1] == 1.0
            assert out[pos, :-1].sum() == 0.0

    def test_marker_position_changes_neighbors(self):
        enc = HashedEncoder(dim=128)
        tokens = make_tokens(["a", "and", "b", "or", "c"])
        m1 = enc.encode(insert_markers(tokens, CoordinatorSpan(TokenSpan(1, 2))))
        m2 = enc.encode(insert_markers(tokens, CoordinatorSpan(TokenSpan(3, 4))))
        assert m1.shape == m2.shape
        assert not np.array_equal(m1, m2)

    def test_length_limit(self):
        enc = HashedEncoder(dim=32, max_len=4)
        with pytest.raises(EncoderLengthError):
            enc.encode(tokens_of_length(5))

    def test_empty_rejected(self):
        with pytest.raises(SchemaError):
            HashedEncoder(dim=32).encode(make_tokens([]))

    def test_rows_normalized(self):
        enc = HashedEncoder(dim=64)
        out = enc.encode(tokens_of_length(6))
        norms = np.linalg.norm(out, axis=1)
        assert np.allclose(norms, 1.0)


class FakeTokenizer:
    def tokenize(self, text):
        # Pretend every character is a subword.
        return [ord(c) % 1000 for c in text]

    def marker_id(self):
        return 999


class FakeSession:
    def __init__(self, dim=8):
        self.dim = dim

    def run(self, ids):
        rng = np.random.default_rng(0)
        base = rng.standard_normal((1000, self.dim))
        return np.stack([base[i] for i in ids])


class TestExternalAdapter:
    def test_word_count_preserved(self):
        enc = ExternalEncoder(FakeSession(), FakeTokenizer(), dim=8, max_len=64)
        tokens = make_tokens(["alpha", "and", "beta"])
        marked = insert_markers(tokens, CoordinatorSpan(TokenSpan(1, 2)))
        out = enc.encode(marked)
        assert out.shape == (5, 8)

    def test_first_vs_mean_pooling(self):
        first = ExternalEncoder(FakeSession(), FakeTokenizer(), dim=8, pooling="first")
        mean = ExternalEncoder(FakeSession(), FakeTokenizer(), dim=8, pooling="mean")
        tokens = make_tokens(["abc"])
        assert not np.array_equal(first.encode(tokens), mean.encode(tokens))

    def test_length_error_not_truncation(self):
        enc = ExternalEncoder(FakeSession(), FakeTokenizer(), dim=8, max_len=3)
        with pytest.raises(EncoderLengthError):
            enc.encode(make_tokens(["abcd"]))

    def test_bad_pooling(self):
        with pytest.raises(ConfigError):
            ExternalEncoder(FakeSession(), FakeTokenizer(), dim=8, pooling="max")


def fake_loader(cfg):
    return FakeSession(dim=cfg["dim"]), FakeTokenizer()


class TestBuildEncoder:
    def test_hashed_default(self):
        enc = build_encoder({"type": "hashed", "dim": 64, "window": 1})
        assert isinstance(enc, HashedEncoder)
        assert enc.dim == 64 and enc.window == 1

    def test_external_via_loader(self):
        enc = build_encoder(
            {"type": "external", "loader": "test_encoder:fake_loader", "dim": 8}
        )
        assert isinstance(enc, ExternalEncoder)
        out = enc.encode(make_tokens(["hi"]))
        assert out.shape == (1, 8)

    def test_unknown_type(self):
        with pytest.raises(ConfigError):
            build_encoder({"type": "mystery"})

    def test_bad_loader(self):
        with pytest.raises(ConfigError):
            build_encoder({"type": "external", "loader": "nope"})


class TestConcat:
    def test_dims_add(self):
        h = np.zeros((12, 64))
        b = np.zeros((12, 1))
        assert concat_position(h, b).shape == (12, 65)

    def test_zero_flags_zero_suffix(self):
        h = np.ones((3, 4))
        b = np.zeros((3, 1))
        out = concat_position(h, b)
        assert out[:, 4:].sum() == 0.0

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        h = rng.standard_normal((6, 5))
        b = rng.standard_normal((6, 2))
        perm = rng.permutation(6)
        assert np.array_equal(concat_position(h, b)[perm], concat_position(h[perm], b[perm]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            concat_position(np.zeros((3, 4)), np.zeros((2, 1)))


class TestDetectorInstance:
    def test_build_with_gold(self):
        tokens = make_tokens(["a", "and", "b"])
        target = CoordinatorSpan(TokenSpan(1, 2))
        inst = build_detector_instance(tokens, target, [target], [BB, C, BA])
        assert isinstance(inst, DetectorInstance)
        assert inst.gold_marked == (BB, O, C, O, BA)
        assert inst.flags.shape == (5, 1)
