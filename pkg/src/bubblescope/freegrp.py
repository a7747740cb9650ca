"""Exact word combinatorics in free groups and surface-group images.

Words are tuples of nonzero signed generator indices: +g is a generator,
-g its inverse.  Everything here is exact integer combinatorics.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

Word = tuple  # tuple[int, ...], letters are nonzero signed generator indices


def word(letters) -> Word:
    w = tuple(int(x) for x in letters)
    if any(x == 0 for x in w):
        raise ValueError("letters are nonzero signed generator indices")
    return w


def reduce_word(w) -> Word:
    """Free reduction: cancel adjacent inverse pairs until none remain."""
    stack: list[int] = []
    for x in w:
        if stack and stack[-1] == -x:
            stack.pop()
        else:
            stack.append(x)
    return tuple(stack)


def invert(w) -> Word:
    return tuple(-x for x in reversed(w))


def multiply(*words) -> Word:
    out: list[int] = []
    for w in words:
        for x in w:
            if out and out[-1] == -x:
                out.pop()
            else:
                out.append(x)
    return tuple(out)


def conjugate(h, w) -> Word:
    """h w h^{-1}, reduced."""
    return multiply(h, w, invert(h))


def cyclic_reduce(w) -> tuple[Word, Word]:
    """Split w = c . core . c^{-1} with a cyclically reduced core.

    Returns (core, conjugator c); the reconstruction identity
    reduce(c core c^{-1}) == reduce(w) always holds.
    """
    w = reduce_word(w)
    conj: list[int] = []
    while len(w) >= 2 and w[0] == -w[-1]:
        conj.append(w[0])
        w = w[1:-1]
    return w, tuple(conj)


def is_cyclically_reduced(w) -> bool:
    w = reduce_word(w)
    return len(w) < 2 or w[0] != -w[-1]


def conjugate_test(u, v) -> bool:
    """Conjugacy in the free group.

    Two words are conjugate iff their cyclic reductions are cyclic
    rotations of each other; rotation matching scans the doubled word.
    """
    cu, _ = cyclic_reduce(u)
    cv, _ = cyclic_reduce(v)
    if len(cu) != len(cv):
        return False
    if not cu:
        return True
    doubled = cu + cu
    n = len(cv)
    return any(doubled[i:i + n] == cv for i in range(n))


# ---------------------------------------------------------------------------
# surface groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceWord:
    """Word in the standard genus-g surface group generators.

    Generator index 2i-1 is a_i and 2i is b_i, for i = 1..genus.
    """

    letters: Word
    genus: int

    def __post_init__(self):
        object.__setattr__(self, "letters", word(self.letters))
        if any(abs(x) > 2 * self.genus for x in self.letters):
            raise ValueError("generator index exceeds 2g")


def surface_a(i: int) -> int:
    return 2 * i - 1


def surface_b(i: int) -> int:
    return 2 * i


def surface_relator(genus: int) -> SurfaceWord:
    """[a_1, b_1] ... [a_g, b_g]."""
    letters: list[int] = []
    for i in range(1, genus + 1):
        a, b = surface_a(i), surface_b(i)
        letters.extend([a, b, -a, -b])
    return SurfaceWord(tuple(letters), genus)


def tau(w: SurfaceWord) -> Word:
    """Surjection onto the free group: a_i -> alpha_i, b_i -> 1.

    Kills the surface relator, so it descends to the surface group.
    """
    out: list[int] = []
    for x in w.letters:
        g = abs(x)
        if g % 2 == 1:  # an a-generator
            alpha = (g + 1) // 2
            y = alpha if x > 0 else -alpha
            if out and out[-1] == -y:
                out.pop()
            else:
                out.append(y)
    return tuple(out)


# ---------------------------------------------------------------------------
# decomposition families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyMember:
    word: Word
    witnesses: tuple  # conjugators beta_i: word = prod_i beta_i a1 beta_i^{-1}


def decomposition_family(k: int, l_range) -> list[FamilyMember]:
    """The words a1 a2^{-l} a1^{k-1} a2^{l}, one per l.

    Each is a product of k conjugates of a1 (witnesses returned), and the
    members are pairwise nonconjugate across distinct l.
    """
    if k < 2:
        raise ValueError("the family needs k >= 2")
    out = []
    for l in l_range:
        w = reduce_word((1,) + (-2,) * l + (1,) * (k - 1) + (2,) * l)
        beta = (-2,) * l
        witnesses = ((),) + tuple(beta for _ in range(k - 1))
        out.append(FamilyMember(w, witnesses))
    return out


def witness_product(member: FamilyMember, gamma: Word = (1,)) -> Word:
    """Expand beta_1 gamma beta_1^{-1} ... beta_k gamma beta_k^{-1}, reduced."""
    return multiply(*(conjugate(b, gamma) for b in member.witnesses))


def abelian_decomposition_check(total, parts) -> bool:
    """Componentwise-sum certificate for abelian fundamental groups."""
    total = tuple(int(x) for x in total)
    sums = [0] * len(total)
    for part in parts:
        part = tuple(int(x) for x in part)
        if len(part) != len(total):
            raise ValueError("arity mismatch between total and parts")
        for i, x in enumerate(part):
            sums[i] += x
    return tuple(sums) == total


# ---------------------------------------------------------------------------
# enumeration and the brute-force oracle
# ---------------------------------------------------------------------------

def enumerate_reduced_words(n_generators: int, max_len: int):
    """All freely reduced words up to max_len over the given generators."""
    letters = [g for g in range(1, n_generators + 1)] + \
              [-g for g in range(1, n_generators + 1)]
    out: list[Word] = [()]
    frontier: list[Word] = [()]
    for _ in range(max_len):
        nxt = []
        for w in frontier:
            for x in letters:
                if w and w[-1] == -x:
                    continue
                nxt.append(w + (x,))
        out.extend(nxt)
        frontier = nxt
    return out


def conjugacy_orbit(w, conjugator_bound: int, n_generators: int = 2) -> set:
    """All reduced h w h^{-1} over conjugators h up to the length bound.

    This is the brute-force conjugacy oracle: v is conjugate to w within
    the bound iff v lies in the returned set.
    """
    return {conjugate(h, w)
            for h in enumerate_reduced_words(n_generators, conjugator_bound)}
