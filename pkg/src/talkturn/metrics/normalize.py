"""Text normalisation applied to reference and hypothesis before WER scoring."""

from __future__ import annotations

import re
import unicodedata
from typing import Callable

_UNITS = [
    "nul", "een", "twee", "drie", "vier", "vijf", "zes", "zeven", "acht", "negen",
    "tien", "elf", "twaalf", "dertien", "veertien", "vijftien", "zestien",
    "zeventien", "achttien", "negentien",
]
_TENS = {
    2: "twintig", 3: "dertig", 4: "veertig", 5: "vijftig",
    6: "zestig", 7: "zeventig", 8: "tachtig", 9: "negentig",
}
_APOSTROPHES = "'’"
_DIGITS = re.compile(r"\d+")


def _nl_below_100(n: int) -> str:
    if n < 20:
        return _UNITS[n]
    tens, unit = divmod(n, 10)
    if unit == 0:
        return _TENS[tens]
    word = _UNITS[unit]
    # tweeëntwintig, drieëntwintig: trema after a trailing e
    joiner = "ën" if word.endswith("e") else "en"
    return word + joiner + _TENS[tens]


def _nl_below_1000(n: int) -> str:
    hundreds, rest = divmod(n, 100)
    if hundreds == 0:
        return _nl_below_100(rest)
    head = "honderd" if hundreds == 1 else _UNITS[hundreds] + "honderd"
    return head + (_nl_below_100(rest) if rest else "")


def spell_number_nl(digits: str) -> str:
    """Dutch cardinal for 0..9999, digit by digit beyond that or with leading zeros.

    >>> spell_number_nl("3")
    'drie'
    >>> spell_number_nl("1234")
    'duizend tweehonderdvierendertig'
    """
    if (len(digits) > 1 and digits.startswith("0")) or int(digits) > 9999:
        return " ".join(_UNITS[int(d)] for d in digits)
    n = int(digits)
    if n < 1000:
        return _nl_below_1000(n)
    thousands, rest = divmod(n, 1000)
    head = "duizend" if thousands == 1 else _UNITS[thousands] + "duizend"
    return head + (" " + _nl_below_1000(rest) if rest else "")


SPELLERS: dict[str, Callable[[str], str]] = {"nl": spell_number_nl}


def _is_punct(c: str) -> bool:
    return unicodedata.category(c).startswith("P")


def strip_punctuation(text: str) -> str:
    """Delete Unicode punctuation, keeping apostrophes between two word characters."""
    out = []
    for i, c in enumerate(text):
        if c in _APOSTROPHES and 0 < i < len(text) - 1 and text[i - 1].isalnum() and text[i + 1].isalnum():
            out.append(c)
        elif not _is_punct(c):
            out.append(c)
    return "".join(out)


def normalize_text(
    text: str, lang: str = "nl", speller: Callable[[str], str] | None = None
) -> list[str]:
    """Lowercase, spell out digits, strip punctuation and split on whitespace.

    Speaker labels must already be split off.

    >>> normalize_text("Goed, en met jou?")
    ['goed', 'en', 'met', 'jou']
    """
    speller = speller or SPELLERS[lang]
    # spell digits before punctuation removal so "3,5" stays two numbers
    text = _DIGITS.sub(lambda m: f" {speller(m.group(0))} ", text)
    return strip_punctuation(text.lower()).split()
