import re
from enum import Enum, auto

from xdmasim.errors import LayoutError


class Category(Enum):
    M = auto()
    N = auto()
    NUMBER = auto()
    ARROW = auto()
    COMMA = auto()


NUMBER_RE = re.compile(r"\d+")

WS_RE = re.compile(r"\s+")


class Token:
    def __init__(self, cat: Category, cno: int, tok: str):
        # category
        self.cat: Category = cat
        # column number
        self.cno: int = cno
        # token string
        self.tok: str = tok

    def __repr__(self):
        return "<Token %r %r @%d>" % (self.cat, self.tok, self.cno)


def tokenize(descriptor: str):
    """
    Splits layout descriptors such as "MNM8N16" or "MN -> MNM8N8, MNM8N32 -> MN"
    into tokens. Letters are case-insensitive.
    """
    text = descriptor.upper()
    pos = 0
    while pos < len(text):
        cno = pos + 1
        ws = WS_RE.match(text, pos)
        if ws is not None:
            pos = ws.end()
            continue
        char = text[pos]
        if char == "M":
            yield Token(Category.M, cno, char)
            pos += 1
        elif char == "N":
            yield Token(Category.N, cno, char)
            pos += 1
        elif char == ",":
            yield Token(Category.COMMA, cno, char)
            pos += 1
        elif text.startswith("->", pos):
            yield Token(Category.ARROW, cno, "->")
            pos += 2
        else:
            number = NUMBER_RE.match(text, pos)
            if number is None:
                raise LayoutError(
                    f"Cannot parse token {descriptor[pos]!r} at column {cno} of"
                    f" {descriptor!r}"
                )
            yield Token(Category.NUMBER, cno, number.group())
            pos = number.end()
