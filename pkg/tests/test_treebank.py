import json
import random
from collections import Counter
from pathlib import Path

import pytest

from coordkit.errors import TreeParseError
from coordkit.schema import (
    CoordinatorSpan,
    SpanKind,
    TokenSpan,
    decode_labels,
    detector_label_str,
    make_tokens,
    encode_labels,
    identifier_labels_for,
)
from coordkit.treebank import (
    TrainingInstance,
    apply_exceptions,
    augment,
    classify_complexity,
    classify_instance,
    extract_coordinations,
    generate_instances,
    instances_from_jsonl,
    instances_to_conll,
    instances_to_jsonl,
    load_paired_left_lexicon,
    parse_bracketed,
    read_treebank,
    strip_empty_elements,
)

FIXTURES = Path(__file__).parent / "fixtures"


def load_expected():
    namespace = {}
    exec((FIXTURES / "expected.py").read_text(), namespace)
    return namespace["EXPECTED"]


def fixture_trees():
    return read_treebank((FIXTURES / "trees.txt").read_text())


def span_tuple(coordinator):
    partner = None
    if coordinator.partner is not None:
        partner = (coordinator.partner.start, coordinator.partner.end)
    return (
        coordinator.span.start,
        coordinator.span.end,
        coordinator.kind.value,
        partner,
    )


class TestParse:
    def test_minimal_tree(self):
        tree = parse_bracketed("(S (NP (DT the) (NN dog)))")
        assert tree.leaf_count() == 2
        assert tree.leaf_texts() == ["the", "dog"]

    def test_np_with_cc(self):
        tree = parse_bracketed(
            "(NP (NP (NNS apples)) (, ,) (NP (NNS pears)) (, ,) (CC and) (NP (NNS grapes)))"
        )
        assert tree.leaf_count() == 6
        assert sum(1 for c in tree.children if c.label == "CC") == 1

    def test_malformed_reports_offset(self):
        with pytest.raises(TreeParseError) as exc:
            parse_bracketed("((S")
        assert exc.value.offset == 3

    def test_unbalanced(self):
        with pytest.raises(TreeParseError):
            parse_bracketed("(S (NP (DT the))")

    def test_empty_constituent(self):
        with pytest.raises(TreeParseError):
            parse_bracketed("(NP)")
        with pytest.raises(TreeParseError):
            parse_bracketed("()")

    def test_trailing_garbage(self):
        with pytest.raises(TreeParseError):
            parse_bracketed("(NN dog) extra")

    def test_anonymous_root_wrapper(self):
        tree = parse_bracketed("( (S (NP (NN dog)) (VP (VBZ barks))) )")
        assert tree.label == "S"
        assert tree.leaf_texts() == ["dog", "barks"]

    def test_bracket_unescaping(self):
        tree = parse_bracketed("(NP (-LRB- -LRB-) (NN x) (-RRB- -RRB-))")
        assert tree.leaf_texts() == ["(", "x", ")"]

    def test_round_trip_bracketed(self):
        text = "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))"
        assert parse_bracketed(text).to_bracketed() == text


class TestStripEmpty:
    def test_trace_removed(self):
        tree = parse_bracketed("(S (NP (-NONE- *T*-1)) (VP (VB go)))")
        stripped = strip_empty_elements(tree)
        assert stripped.leaf_texts() == ["go"]

    def test_all_empty_gives_none(self):
        tree = parse_bracketed("(S (NP (-NONE- *)))")
        assert strip_empty_elements(tree) is None


class TestExtract:
    def test_simple_np(self):
        tree = parse_bracketed(
            "(NP (NP (NNS apples)) (, ,) (NP (NNS pears)) (, ,) (CC and) (NP (NNS grapes)))"
        )
        coords = extract_coordinations(tree)
        assert len(coords) == 1
        assert coords[0].target.span == TokenSpan(4, 5)
        assert coords[0].conjuncts == (TokenSpan(0, 1), TokenSpan(2, 3), TokenSpan(5, 6))

    def test_no_coordinator(self):
        tree = parse_bracketed("(S (NP (DT the) (NN dog)) (VP (VBZ sleeps)))")
        assert extract_coordinations(tree) == []

    def test_nested_two_coordinations(self):
        tree = parse_bracketed(
            "(S (S (NP (PRP You)) (VP (VB eat) (CC or) (VB drink))) (CC and)"
            " (S (NP (PRP I)) (VP (VBP sleep))) (. .))"
        )
        coords = extract_coordinations(tree)
        assert len(coords) == 2

    def test_initial_coordinator_dropped(self, caplog):
        tree = parse_bracketed("(S (CC But) (NP (PRP she)) (VP (VBD stayed)) (. .))")
        with caplog.at_level("WARNING"):
            assert extract_coordinations(tree) == []
        assert any("dropping coordinator" in r.message for r in caplog.records)


class TestFixtureConversion:
    """The 25-tree fixture against fully hand-written expectations."""

    def test_token_sequences(self):
        trees = fixture_trees()
        expected = load_expected()
        assert len(trees) == len(expected) == 25
        for tree, exp in zip(trees, expected):
            stripped = strip_empty_elements(tree)
            assert " ".join(stripped.leaf_texts()) == exp["tokens"]

    def test_instances_exact(self):
        trees = fixture_trees()
        expected = load_expected()
        for tree, exp in zip(trees, expected):
            instances = generate_instances(tree)
            got = [
                (span_tuple(i.target), " ".join(detector_label_str(l) for l in i.detector_labels))
                for i in instances
            ]
            want = [(t, labels) for t, labels in exp["instances"]]
            assert got == want, f"tree: {exp['tokens']}"

    def test_coordinator_lists(self):
        trees = fixture_trees()
        expected = load_expected()
        for tree, exp in zip(trees, expected):
            instances = generate_instances(tree)
            for inst in instances:
                assert [span_tuple(c) for c in inst.all_coordinators] == exp["coordinators"]

    def test_per_kind_instance_counts(self):
        # One instance per contiguous coordinator, two per paired, three for
        # the canonical respectively sentence.
        trees = fixture_trees()
        expected = load_expected()
        for tree, exp in zip(trees, expected):
            instances = generate_instances(tree)
            kinds = Counter(i.target.kind for i in instances)
            assert kinds[SpanKind.PAIRED_LEFT] == kinds[SpanKind.PAIRED_RIGHT]
            has_resp = any(k == "respectively" for _, _, k, _ in exp["coordinators"])
            if has_resp:
                assert kinds[SpanKind.RESPECTIVELY] == 1

    def test_round_trip_through_decode(self):
        for tree in fixture_trees():
            for inst in generate_instances(tree):
                coordination = decode_labels(inst.detector_labels, inst.target)
                re_encoded = encode_labels(len(inst.tokens), coordination)
                assert list(inst.detector_labels) == re_encoded


class TestSerialization:
    def test_jsonl_round_trip(self):
        instances = [i for t in fixture_trees() for i in generate_instances(t)]
        text = instances_to_jsonl(instances)
        back = instances_from_jsonl(text)
        assert back == instances

    def test_conll_block_count(self):
        instances = [i for t in fixture_trees() for i in generate_instances(t)]
        text = instances_to_conll(instances)
        blocks = [b for b in text.split("\n\n") if b.strip()]
        assert len(blocks) == len(instances)


def build_random_instance(rng):
    from test_schema import random_coordination

    n, coordination = random_coordination(rng, max_len=24)
    tokens = make_tokens([f"w{i}" for i in range(n)])
    coordinators = (coordination.target,)
    return TrainingInstance(
        tokens=tokens,
        target=coordination.target,
        all_coordinators=coordinators,
        detector_labels=tuple(encode_labels(n, coordination)),
        identifier_labels=tuple(identifier_labels_for(n, coordinators)),
    )


class TestAugment:
    def test_spec_swap(self):
        tree = fixture_trees()[0]
        inst = generate_instances(tree)[0]
        swapped, changed = augment(inst)
        assert changed
        assert swapped.texts == "My sister likes grapes , pears , and apples .".split()
        # Labels re-derived from the swapped coordination.
        coordination = decode_labels(swapped.detector_labels, swapped.target)
        assert [
            " ".join(swapped.texts[s.start : s.end]) for s in coordination.conjuncts
        ] == ["grapes", "pears", "apples"]

    def test_unequal_width_swap(self):
        tree = fixture_trees()[19]  # "the man in the hat and the woman"
        inst = generate_instances(tree)[0]
        swapped, changed = augment(inst)
        assert changed
        assert swapped.texts == "the woman and the man in the hat".split()
        assert swapped.target.span == TokenSpan(2, 3)

    def test_involution_on_fixture(self):
        for tree in fixture_trees():
            for inst in generate_instances(tree):
                once, changed = augment(inst)
                if not changed:
                    assert once == inst
                    continue
                twice, _ = augment(once)
                assert twice == inst

    def test_token_multiset_preserved(self):
        rng = random.Random(991)
        for _ in range(300):
            inst = build_random_instance(rng)
            swapped, _ = augment(inst)
            assert Counter(swapped.texts) == Counter(inst.texts)
            assert len(swapped.tokens) == len(inst.tokens)

    def test_involution_random(self):
        rng = random.Random(313)
        for _ in range(300):
            inst = build_random_instance(rng)
            once, changed = augment(inst)
            if changed:
                twice, _ = augment(once)
                assert twice == inst

    def test_single_conjunct_skipped(self):
        from coordkit.schema import Coordination

        tokens = make_tokens(["a", "or", "b"])
        target = CoordinatorSpan(TokenSpan(1, 2))
        inst = TrainingInstance(
            tokens=tokens,
            target=target,
            all_coordinators=(target,),
            detector_labels=tuple(
                encode_labels(3, Coordination(target, (TokenSpan(0, 1),)))
            ),
            identifier_labels=tuple(identifier_labels_for(3, (target,))),
        )
        same, changed = augment(inst)
        assert not changed
        assert same == inst


class TestComplexity:
    def test_simple_and(self):
        tree = fixture_trees()[0]
        inst = generate_instances(tree)[0]
        assert classify_instance(inst) == "Simple"

    def test_complex_conjp(self):
        tree = fixture_trees()[5]  # as well as
        inst = generate_instances(tree)[0]
        assert classify_instance(inst) == "Complex"

    def test_complex_respectively(self):
        tree = fixture_trees()[2]
        instances = generate_instances(tree)
        resp = [i for i in instances if i.target.kind is SpanKind.RESPECTIVELY][0]
        assert classify_instance(resp) == "Complex"

    def test_complex_paired(self):
        tree = fixture_trees()[1]
        for inst in generate_instances(tree):
            assert classify_instance(inst) == "Complex"

    def test_partition_exhaustive(self):
        instances = [i for t in fixture_trees() for i in generate_instances(t)]
        simple = [i for i in instances if classify_instance(i) == "Simple"]
        complex_ = [i for i in instances if classify_instance(i) == "Complex"]
        assert len(simple) + len(complex_) == len(instances)

    def test_classify_raw_spans(self):
        assert (
            classify_complexity(CoordinatorSpan(TokenSpan(1, 2)), ["a", "But", "b"])
            == "Simple"
        )


class TestExceptions:
    def test_drop_and_replace(self, tmp_path):
        instances = [i for t in fixture_trees()[:2] for i in generate_instances(t)]
        sentence0 = " ".join(instances[0].texts)
        sentence1 = " ".join(instances[1].texts)
        replacement = instances[1].to_obj()
        exceptions = tmp_path / "exceptions.jsonl"
        exceptions.write_text(
            json.dumps({"sentence": sentence0, "action": "drop"})
            + "\n"
            + json.dumps(
                {"sentence": sentence1, "action": "replace", "instances": [replacement]}
            )
            + "\n"
        )
        out, applied = apply_exceptions(instances, str(exceptions))
        assert applied == 2
        sentences = {" ".join(i.texts) for i in out}
        assert sentence0 not in sentences
        assert sum(1 for i in out if " ".join(i.texts) == sentence1) == 1


class TestLexicon:
    def test_default_entries(self):
        lexicon = load_paired_left_lexicon()
        assert {"either", "neither", "both", "not only", "whether"} <= lexicon

    def test_custom_file(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("# comment\nfoo bar\n")
        assert load_paired_left_lexicon(str(path)) == frozenset({"foo bar"})
