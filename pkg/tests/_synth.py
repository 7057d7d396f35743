"""Deterministic templated treebank for training sanity checks."""

import random

NOUNS = ["apples", "pears", "grapes", "mangoes", "plums", "cherries",
         "beans", "olives", "figs", "dates", "carrots", "leeks"]
NAMES = ["Ada", "Ben", "Cleo", "Dan", "Eve", "Fay", "Gus", "Hal", "Ivy", "Jo"]
VERBS = ["likes", "buys", "sells", "grows", "picks", "cooks"]
IVERBS = ["sings", "dances", "naps", "works", "reads", "paints"]
PVERBS = ["tried", "failed", "won", "lost", "stayed", "left"]


def _np_list(rng):
    name = rng.choice(NAMES)
    verb = rng.choice(VERBS)
    a, b, c = rng.sample(NOUNS, 3)
    return (
        f"(S (NP (NNP {name})) (VP (VBZ {verb}) (NP (NP (NNS {a})) (, ,) "
        f"(NP (NNS {b})) (, ,) (CC and) (NP (NNS {c})))) (. .))"
    )


def _np_pair(rng):
    name = rng.choice(NAMES)
    verb = rng.choice(VERBS)
    a, b = rng.sample(NOUNS, 2)
    cc = rng.choice(["or", "and"])
    return (
        f"(S (NP (NNP {name})) (VP (VBZ {verb}) (NP (NP (NNS {a})) "
        f"(CC {cc}) (NP (NNS {b})))) (. .))"
    )


def _paired(rng):
    name = rng.choice(NAMES)
    verb = rng.choice(VERBS)
    a, b = rng.sample(NOUNS, 2)
    return (
        f"(S (NP (NNP {name})) (VP (VBZ {verb}) (NP (CC either) (NP (NNS {a})) "
        f"(CC or) (NP (NNS {b})))) (. .))"
    )


def _verb_pair(rng):
    name = rng.choice(NAMES)
    u, v = rng.sample(IVERBS, 2)
    return (
        f"(S (NP (NNP {name})) (VP (VP (VBZ {u})) (CC and) (VP (VBZ {v}))) (. .))"
    )


def _clause_but(rng):
    x, y = rng.sample(NAMES, 2)
    u, v = rng.sample(PVERBS, 2)
    return (
        f"(S (S (NP (NNP {x})) (VP (VBD {u}))) (CC but) "
        f"(S (NP (NNP {y})) (VP (VBD {v}))) (. .))"
    )


def _respectively(rng):
    x, y = rng.sample(NAMES, 2)
    a, b = rng.sample(NOUNS, 2)
    return (
        f"(S (NP (NP (NNP {x})) (CC and) (NP (NNP {y}))) (VP (VBD saw) "
        f"(NP (NP (NNS {a})) (CC and) (NP (NNS {b}))) (ADVP (RB respectively))) (. .))"
    )


TEMPLATES = [_np_list, _np_pair, _paired, _verb_pair, _clause_but, _respectively]


def synth_treebank(n_sentences: int = 50, seed: int = 7) -> str:
    """Blank-line separated bracketed trees, deterministic under the seed."""
    rng = random.Random(seed)
    blocks = []
    for i in range(n_sentences):
        template = TEMPLATES[i % len(TEMPLATES)]
        blocks.append(template(rng))
    return "\n\n".join(blocks) + "\n"
