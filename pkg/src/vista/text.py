"""Shared text substrate for the metric suite: canonical tokenizer, Porter
stemmer, token-level edit distance.

Every metric tokenizes through `tokenize` so scores stay comparable.
"""

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop empties."""
    return _TOKEN_RE.findall(text.lower())


def levenshtein(a, b) -> int:
    """Edit distance between two token sequences (two-row DP)."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


class PorterStemmer:
    """Classic Porter (1980) suffix-stripping stemmer.

    Straight transcription of the published algorithm; operates on lowercase
    ASCII words, returns the input unchanged when shorter than 3 characters.
    """

    def _cons(self, word, i):
        ch = word[i]
        if ch in "aeiou":
            return False
        if ch == "y":
            return i == 0 or not self._cons(word, i - 1)
        return True

    def _measure(self, word, j):
        """Number of vowel-consonant sequences in word[:j+1]."""
        n = 0
        i = 0
        while True:
            if i > j:
                return n
            if not self._cons(word, i):
                break
            i += 1
        i += 1
        while True:
            while True:
                if i > j:
                    return n
                if self._cons(word, i):
                    break
                i += 1
            i += 1
            n += 1
            while True:
                if i > j:
                    return n
                if not self._cons(word, i):
                    break
                i += 1
            i += 1

    def _vowel_in_stem(self, word, j):
        return any(not self._cons(word, i) for i in range(j + 1))

    def _double_cons(self, word, j):
        return j >= 1 and word[j] == word[j - 1] and self._cons(word, j)

    def _cvc(self, word, i):
        if i < 2 or not self._cons(word, i) or self._cons(word, i - 1) or not self._cons(word, i - 2):
            return False
        return word[i] not in "wxy"

    def _ends(self, suffix):
        if not self._b.endswith(suffix, 0, self._k + 1):
            return False
        if len(suffix) > self._k + 1:
            return False
        self._j = self._k - len(suffix)
        return True

    def _set_to(self, s):
        self._b = self._b[: self._j + 1] + s
        self._k = len(self._b) - 1

    def _r(self, s):
        if self._measure(self._b, self._j) > 0:
            self._set_to(s)

    def _step1ab(self):
        b = self._b
        if b[self._k] == "s":
            if self._ends("sses"):
                self._k -= 2
            elif self._ends("ies"):
                self._set_to("i")
            elif b[self._k - 1] != "s":
                self._k -= 1
        if self._ends("eed"):
            if self._measure(self._b, self._j) > 0:
                self._k -= 1
        elif (self._ends("ed") or self._ends("ing")) and self._vowel_in_stem(self._b, self._j):
            self._k = self._j
            self._b = self._b[: self._k + 1]
            if self._ends("at"):
                self._set_to("ate")
            elif self._ends("bl"):
                self._set_to("ble")
            elif self._ends("iz"):
                self._set_to("ize")
            elif self._double_cons(self._b, self._k):
                if self._b[self._k] not in "lsz":
                    self._k -= 1
                    self._b = self._b[: self._k + 1]
            elif self._measure(self._b, self._k) == 1 and self._cvc(self._b, self._k):
                self._set_to("e")

    def _step1c(self):
        if self._ends("y") and self._vowel_in_stem(self._b, self._j):
            self._b = self._b[: self._k] + "i"

    _STEP2 = [
        ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
        ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
        ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
        ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
        ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
    ]

    _STEP3 = [
        ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
        ("ical", "ic"), ("ful", ""), ("ness", ""),
    ]

    _STEP4 = [
        "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
        "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
    ]

    def _step2(self):
        for suffix, repl in self._STEP2:
            if self._ends(suffix):
                self._r(repl)
                return

    def _step3(self):
        for suffix, repl in self._STEP3:
            if self._ends(suffix):
                self._r(repl)
                return

    def _step4(self):
        for suffix in self._STEP4:
            if self._ends(suffix):
                if suffix == "ion" and self._b[self._j] not in "st":
                    continue
                if self._measure(self._b, self._j) > 1:
                    self._k = self._j
                    self._b = self._b[: self._k + 1]
                return

    def _step5(self):
        self._j = self._k
        if self._b[self._k] == "e":
            a = self._measure(self._b, self._k - 1)
            if a > 1 or (a == 1 and not self._cvc(self._b, self._k - 1)):
                self._k -= 1
                self._b = self._b[: self._k + 1]
        if self._b[self._k] == "l" and self._double_cons(self._b, self._k) \
                and self._measure(self._b, self._k - 1) > 1:
            self._k -= 1
            self._b = self._b[: self._k + 1]

    def stem(self, word: str) -> str:
        word = word.lower()
        if len(word) <= 2:
            return word
        self._b = word
        self._k = len(word) - 1
        self._j = 0
        self._step1ab()
        self._b = self._b[: self._k + 1]
        self._step1c()
        self._step2()
        self._step3()
        self._step4()
        self._step5()
        return self._b[: self._k + 1]


_STEMMER = PorterStemmer()


def stem(word: str) -> str:
    return _STEMMER.stem(word)
