"""Seeded generators for the symbolic datasets and synthetic blobs.

Every generator is a pure function of its parameters and seed. Sequence
datasets carry their inputs as a (n, steps, features) float array plus
0/1 targets; a line-oriented text export is available for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PARITY_LENGTH = 10
REBER_ALPHABET = "BTSXPVE"
REBER_MAX_LENGTH = 20
SYMMETRY_LETTERS = "ABCDEFGH"
SYMMETRY_FILLER = "."
SYMMETRY_ALPHABET = SYMMETRY_LETTERS + SYMMETRY_FILLER


@dataclass
class Dataset:
    """Inputs, binary targets and the generation recipe that produced them."""

    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets disagree on example count")

    def __len__(self):
        return self.inputs.shape[0]

    def tokens(self, index):
        """Human-readable token list for one example."""
        x = self.inputs[index]
        alphabet = self.meta.get("alphabet")
        if x.ndim == 1:  # plain feature vector, not a sequence
            return [repr(float(v)) for v in x]
        if alphabet and x.shape[1] == len(alphabet):
            return [alphabet[int(np.argmax(step))] for step in x]
        return [format(float(step[0]), "g") for step in x]

    def save_text(self, path):
        """One example per line: space-separated tokens, TAB, target."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i in range(len(self)):
                fh.write(
                    " ".join(self.tokens(i)) + "\t" + format(self.targets[i], "g") + "\n"
                )


def _scalar_sequences(bits):
    """(n, length) 0/1 array -> (n, length, 1) float inputs."""
    return np.asarray(bits, dtype=np.float64)[:, :, None]


def _one_hot(strings, alphabet, length):
    index = {ch: i for i, ch in enumerate(alphabet)}
    out = np.zeros((len(strings), length, len(alphabet)))
    for i, s in enumerate(strings):
        for t, ch in enumerate(s):
            out[i, t, index[ch]] = 1.0
    return out


def _noisy_copies(dataset, copies, amplitude, rng, task):
    """Repeated training examples with additive uniform input noise."""
    X = np.repeat(dataset.inputs, copies, axis=0)
    y = np.repeat(dataset.targets, copies, axis=0)
    X = X + rng.uniform(-amplitude, amplitude, size=X.shape)
    return Dataset(X, y, {"task": task, "noise": amplitude})


# -- parity ----------------------------------------------------------------------


def parity_target(bits):
    return float(int(np.sum(bits)) % 2)


def gen_parity(seed=0):
    """All 1024 ten-step binary sequences, split 256 train / 768 novel,
    plus a noisy set of three jittered copies of each training sequence.

    Returns ``(train, test_novel, test_noisy)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    codes = np.arange(2**PARITY_LENGTH)
    bits = (codes[:, None] >> np.arange(PARITY_LENGTH)[::-1]) & 1
    targets = bits.sum(axis=1) % 2

    train_idx = rng.choice(len(codes), size=256, replace=False)
    mask = np.zeros(len(codes), dtype=bool)
    mask[train_idx] = True

    meta = {"task": "parity", "seed": seed}
    train = Dataset(_scalar_sequences(bits[mask]), targets[mask], meta)
    novel = Dataset(_scalar_sequences(bits[~mask]), targets[~mask], meta)
    noisy = _noisy_copies(train, 3, 0.1, rng, "parity")
    return train, novel, noisy


# -- majority --------------------------------------------------------------------


def majority_target(bits):
    return float(int(np.sum(bits)) * 2 > len(bits))


def gen_majority(length, seed=0, n_train=100, n_novel=768, noisy_copies=3):
    """Distinct random binary sequences of odd ``length``; target is 1 when
    ones outnumber zeros. Returns ``(train, test_novel, test_noisy)``."""
    if length % 2 == 0:
        raise ValueError("majority length must be odd (ties are undefined)")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 13, length]))

    seen = set()
    rows = []
    while len(rows) < n_train + n_novel:
        candidate = tuple(rng.integers(0, 2, size=length).tolist())
        if candidate in seen:
            continue
        seen.add(candidate)
        rows.append(candidate)
    bits = np.array(rows)
    targets = (bits.sum(axis=1) * 2 > length).astype(np.float64)

    meta = {"task": "majority", "length": length, "seed": seed}
    train = Dataset(_scalar_sequences(bits[:n_train]), targets[:n_train], meta)
    novel = Dataset(_scalar_sequences(bits[n_train:]), targets[n_train:], meta)
    noisy = _noisy_copies(train, noisy_copies, 0.1, rng, "majority")
    return train, novel, noisy


# -- Reber grammar ---------------------------------------------------------------


class ReberFsm:
    """The Reber grammar automaton.

    States are small ints; 0 is the start, and a string is accepted when
    it walks a complete path from the start through the final E into the
    accepting state with no symbols left over.
    """

    START = 0
    ACCEPT = 7

    TRANSITIONS = {
        (0, "B"): 1,
        (1, "T"): 2,
        (1, "P"): 3,
        (2, "S"): 2,
        (2, "X"): 4,
        (3, "T"): 3,
        (3, "V"): 5,
        (4, "X"): 3,
        (4, "S"): 6,
        (5, "P"): 4,
        (5, "V"): 6,
        (6, "E"): 7,
    }

    def __init__(self):
        self.alphabet = REBER_ALPHABET
        self._outgoing = {}
        for (state, symbol), nxt in sorted(self.TRANSITIONS.items()):
            self._outgoing.setdefault(state, []).append((symbol, nxt))

    def accepts(self, string):
        state = self.START
        for ch in string:
            nxt = self.TRANSITIONS.get((state, ch))
            if nxt is None:
                return False
            state = nxt
        return state == self.ACCEPT

    def sample(self, rng, max_length=REBER_MAX_LENGTH):
        """One in-grammar string of length <= max_length, resampling walks
        that run long (uniform choice among outgoing transitions)."""
        while True:
            state = self.START
            chars = []
            while state != self.ACCEPT and len(chars) <= max_length:
                options = self._outgoing[state]
                symbol, state = options[rng.integers(0, len(options))]
                chars.append(symbol)
            if state == self.ACCEPT and len(chars) <= max_length:
                return "".join(chars)


def reber_accepts(fsm, string):
    return fsm.accepts(string)


def reber_negative(fsm, positive, rng):
    """Corrupt one position of an in-grammar string so it leaves the
    grammar; position and replacement symbol are resampled until the
    result is rejected."""
    symbols = REBER_ALPHABET
    while True:
        pos = int(rng.integers(0, len(positive)))
        replacement = symbols[rng.integers(0, len(symbols))]
        if replacement == positive[pos]:
            continue
        candidate = positive[:pos] + replacement + positive[pos + 1 :]
        if not fsm.accepts(candidate):
            return candidate


def _pad_reber(strings):
    return ["B" * (REBER_MAX_LENGTH - len(s)) + s for s in strings]


def gen_reber(n_train, n_test=2000, seed=0):
    """Balanced in/out-of-grammar strings, one-hot over the 7 symbols,
    left-padded with B to a common length of 20.

    Returns ``(train, test)``; each negative differs from an in-grammar
    source string at exactly one position.
    """
    if n_train % 2 or n_test % 2:
        raise ValueError("balanced sets require even sizes")
    fsm = ReberFsm()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))

    def build(n, tag):
        positives = [fsm.sample(rng) for _ in range(n // 2)]
        negatives = [reber_negative(fsm, s, rng) for s in positives]
        strings = _pad_reber(positives + negatives)
        targets = np.concatenate([np.ones(n // 2), np.zeros(n - n // 2)])
        X = _one_hot(strings, REBER_ALPHABET, REBER_MAX_LENGTH)
        return Dataset(
            X,
            targets,
            {
                "task": "reber",
                "alphabet": REBER_ALPHABET,
                "split": tag,
                "seed": seed,
                "strings": strings,
                "raw_positives": positives,
                "raw_negatives": negatives,
            },
        )

    return build(n_train, "train"), build(n_test, "test")


# -- symmetry --------------------------------------------------------------------


def symmetry_positive(s, f, rng):
    letters = [SYMMETRY_LETTERS[i] for i in rng.integers(0, 8, size=s)]
    return "".join(letters) + SYMMETRY_FILLER * f + "".join(reversed(letters))


def symmetry_label(string, s, f):
    """1.0 when the string is a well-formed mirror around its filler block."""
    length = 2 * s + f
    if len(string) != length:
        return 0.0
    if any(string[i] != SYMMETRY_FILLER for i in range(s, s + f)):
        return 0.0
    if any(string[i] not in SYMMETRY_LETTERS for i in _letter_positions(s, f)):
        return 0.0
    return 1.0 if all(string[i] == string[length - 1 - i] for i in range(s)) else 0.0


def _letter_positions(s, f):
    return list(range(s)) + list(range(s + f, 2 * s + f))


def symmetry_negative_exchange(positive, s, f, rng):
    """Swap two adjacent distinct non-filler symbols (within a half)."""
    spans = [(0, s - 1), (s + f, 2 * s + f - 1)]
    candidates = [
        i
        for lo, hi in spans
        for i in range(lo, hi)
        if positive[i] != positive[i + 1]
    ]
    if not candidates:
        return None
    i = candidates[rng.integers(0, len(candidates))]
    chars = list(positive)
    chars[i], chars[i + 1] = chars[i + 1], chars[i]
    return "".join(chars)


def symmetry_negative_substitution(positive, s, f, rng):
    positions = _letter_positions(s, f)
    pos = positions[rng.integers(0, len(positions))]
    others = [c for c in SYMMETRY_LETTERS if c != positive[pos]]
    replacement = others[rng.integers(0, len(others))]
    return positive[:pos] + replacement + positive[pos + 1 :]


def gen_symmetry(s=5, f=10, n_train=5000, n_test=2000, seed=0):
    """Mirror-symmetric strings around a filler block vs. broken ones.

    Negatives split equally between adjacent-exchange and substitution
    corruptions of fresh positives. Returns ``(train, test)``.
    """
    if n_train % 2 or n_test % 2:
        raise ValueError("balanced sets require even sizes")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 19, s, f]))
    length = 2 * s + f

    def negatives(count):
        out = []
        use_exchange = True
        while len(out) < count:
            base = symmetry_positive(s, f, rng)
            corrupted = (
                symmetry_negative_exchange(base, s, f, rng)
                if use_exchange
                else symmetry_negative_substitution(base, s, f, rng)
            )
            if corrupted is None:  # all-equal half; draw another base
                continue
            out.append(corrupted)
            use_exchange = not use_exchange
        return out

    def build(n, tag):
        pos = [symmetry_positive(s, f, rng) for _ in range(n // 2)]
        neg = negatives(n - n // 2)
        targets = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        X = _one_hot(pos + neg, SYMMETRY_ALPHABET, length)
        return Dataset(
            X,
            targets,
            {
                "task": "symmetry",
                "alphabet": SYMMETRY_ALPHABET,
                "s": s,
                "f": f,
                "split": tag,
                "seed": seed,
                "strings": pos + neg,
            },
        )

    return build(n_train, "train"), build(n_test, "test")


# -- attractor capacity targets -----------------------------------------------------


def gen_attractor_targets(n_targets, dim=50, samples_per_target=50, seed=0):
    """Uniform target states strictly inside (-1, 1)^dim."""
    from .attractor import AttractorTargets

    if n_targets < 1:
        raise ValueError("n_targets must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
    states = rng.uniform(-1.0, 1.0, size=(n_targets, dim))
    while np.any(np.abs(states) >= 1.0):  # uniform() can return the -1 endpoint
        redo = np.abs(states) >= 1.0
        states[redo] = rng.uniform(-1.0, 1.0, size=int(redo.sum()))
    return AttractorTargets(states, samples_per_target)


# -- synthetic blobs -----------------------------------------------------------------


def gen_blobs(n_per_class, separation, seed=0, n_test_per_class=None, sigma=1.0):
    """Two isotropic Gaussian clusters at (-separation/2, 0) and
    (+separation/2, 0) with labels 0 and 1. Returns ``(train, test)``."""
    if separation <= 0:
        raise ValueError("separation must be > 0")
    if n_test_per_class is None:
        n_test_per_class = n_per_class
    rng = np.random.default_rng(np.random.SeedSequence([seed, 29]))
    half = separation / 2.0

    def build(n, tag):
        left = rng.normal(0.0, sigma, size=(n, 2)) + np.array([-half, 0.0])
        right = rng.normal(0.0, sigma, size=(n, 2)) + np.array([half, 0.0])
        X = np.concatenate([left, right])
        y = np.concatenate([np.zeros(n), np.ones(n)])
        return Dataset(
            X, y, {"task": "blobs", "separation": separation, "split": tag}
        )

    return build(n_per_class, "train"), build(n_test_per_class, "test")
