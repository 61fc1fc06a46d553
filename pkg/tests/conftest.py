import random

import pytest

from nfclm import (EOS, NfclmModel, UniformModel, build_from_entities,
                   load_class_alphabet, load_vocabulary, train_decider,
                   train_ngram)

TOY_SYMBOLS = ["_play", "_ro", "sie", "_by", "_browne", "salie", "berta", "_flack"]

SONG_ENTITIES = [("_ro", "sie"), ("_ro", "salie")]
ARTIST_ENTITIES = [("_ro", "berta", "_flack"), ("_browne",)]


@pytest.fixture(scope="session")
def toy_vocab():
    return load_vocabulary(TOY_SYMBOLS)


@pytest.fixture(scope="session")
def toy_classes():
    return load_class_alphabet(["@bg", "@song", "@artist"])


@pytest.fixture(scope="session")
def song_fst():
    return build_from_entities("@song", SONG_ENTITIES)


@pytest.fixture(scope="session")
def artist_fst():
    return build_from_entities("@artist", ARTIST_ENTITIES)


def make_toy_model(vocab, classes, song, artist, **kwargs):
    """Uniform background over the toy symbols + EOS, tiny trained decider."""
    decider = train_decider(
        [("_play", "@song", "_by", "@artist"),
         ("_play", "@song"),
         ("_play", "_by", "@artist")],
        vocab, classes, order=2)
    return NfclmModel(
        vocabulary=vocab,
        classes=classes,
        background=UniformModel(vocab.symbols + (EOS,)),
        class_fsts={"@song": song, "@artist": artist},
        decider=decider,
        **kwargs,
    )


@pytest.fixture()
def toy_model(toy_vocab, toy_classes, song_fst, artist_fst):
    return make_toy_model(toy_vocab, toy_classes, song_fst, artist_fst)


@pytest.fixture()
def toy_model_exact_beam(toy_vocab, toy_classes, song_fst, artist_fst):
    """Beam settings wide enough to keep every alignment."""
    return make_toy_model(toy_vocab, toy_classes, song_fst, artist_fst,
                          beam_size=10 ** 6, beam_delta=float("inf"))


def random_instance(rng: random.Random, max_history: int = 8):
    """Small random model plus live histories sampled from it.

    Sized for the exact-enumeration oracle: up to 12 symbols, 2-3
    entity classes, entities up to length 6.
    """
    from nfclm import sample as model_sample

    n_initial = rng.randint(2, 6)
    n_cont = rng.randint(2, 6)
    symbols = [f"_w{i}" for i in range(n_initial)] + [f"c{i}" for i in range(n_cont)]
    vocab = load_vocabulary(symbols)
    n_classes = rng.randint(2, 3)
    labels = ["@bg"] + [f"@k{i}" for i in range(n_classes)]
    classes = load_class_alphabet(labels)

    fsts = {}
    for label in labels[1:]:
        entities = []
        for _ in range(rng.randint(1, 5)):
            length = rng.randint(1, 6)
            entities.append((tuple(rng.choice(symbols) for _ in range(length)),
                             rng.randint(1, 3)))
        fsts[label] = build_from_entities(label, entities)

    bg_corpus = [
        tuple(rng.choice(symbols) for _ in range(rng.randint(1, 8)))
        for _ in range(rng.randint(5, 15))
    ]
    background = train_ngram(bg_corpus, vocab, order=rng.randint(1, 3),
                             discount=rng.uniform(0.5, 0.9))

    tagged_corpus = []
    for _ in range(rng.randint(5, 15)):
        sentence = []
        for _ in range(rng.randint(1, 8)):
            if rng.random() < 0.3:
                sentence.append(rng.choice(labels[1:]))
            else:
                sentence.append(rng.choice(symbols))
        tagged_corpus.append(tuple(sentence))
    decider = train_decider(tagged_corpus, vocab, classes,
                            order=rng.randint(1, 3),
                            alpha=rng.choice([0.0, 0.5, 1.0]))

    model = NfclmModel(
        vocabulary=vocab,
        classes=classes,
        background=background,
        class_fsts=fsts,
        decider=decider,
        beam_size=10 ** 4,
        beam_delta=1e9,
    )
    histories = []
    for s in range(3):
        drawn = model_sample(model, max_length=max_history, seed=rng.randrange(2 ** 31))
        histories.append(tuple(drawn[:max_history]))
    histories.append(())
    return model, histories
