from collections.abc import Iterator

from xdmasim.config.layout import LayoutSpec
from xdmasim.errors import LayoutError
from xdmasim.parser.tokenizer import Category, Token, tokenize


class ParseError(LayoutError):
    def __init__(self, message):
        super().__init__(message)


class UnexpectedEndOfInput(ParseError):
    def __init__(self, message: str = ""):
        super().__init__("Unexpected end of layout descriptor. " + message)


class UnexpectedToken(ParseError):
    def __init__(self, token: Token, expected: str = ""):
        super().__init__(f"Received unexpected token {token}. {expected}")


class LookaheadStreamer:
    def __init__(self, token_stream: Iterator[Token]):
        self.lookahead_buffer: list[Token] = []
        self.stream = token_stream

    def __iter__(self):
        return self

    def __next__(self) -> Token:
        """
        Returns and consumes next token from the stream.
        """
        if self.lookahead_buffer:
            return self.lookahead_buffer.pop(0)
        return next(self.stream)

    def at(self, i: int) -> Token:
        """
        Lookahead the i-th next token (i=0 is the next token) without
        consuming it.
        """
        assert i >= 0
        try:
            while i >= len(self.lookahead_buffer):
                self.lookahead_buffer.append(next(self.stream))
        except StopIteration as exc:
            raise UnexpectedEndOfInput() from exc
        return self.lookahead_buffer[i]

    def at_end(self) -> bool:
        try:
            self.at(0)
        except UnexpectedEndOfInput:
            return True
        return False

    def expect(self, category: Category, hint: str) -> Token:
        if self.at_end():
            raise UnexpectedEndOfInput(hint)
        tok = next(self)
        if tok.cat != category:
            raise UnexpectedToken(tok, hint)
        return tok


def parse_layout_tokens(tokens: LookaheadStreamer, elem_bytes: int = 1) -> LayoutSpec:
    tokens.expect(Category.M, "Layout descriptors start with 'MN'.")
    tokens.expect(Category.N, "Layout descriptors start with 'MN'.")
    if tokens.at_end() or tokens.at(0).cat != Category.M:
        return LayoutSpec.row_major(elem_bytes)
    next(tokens)
    tile_m = int(tokens.expect(Category.NUMBER, "Expected tile height after 'M'.").tok)
    tokens.expect(Category.N, "Expected 'N' after the tile height.")
    tile_n = int(tokens.expect(Category.NUMBER, "Expected tile width after 'N'.").tok)
    return LayoutSpec.tiled(tile_m, tile_n, elem_bytes)


def _check_end(tokens: LookaheadStreamer) -> None:
    if not tokens.at_end():
        raise UnexpectedToken(next(tokens), "Expected end of descriptor.")


def parse_layout(descriptor: str, elem_bytes: int = 1) -> LayoutSpec:
    """
    Parses "MN" (row-major) or "MNM<tm>N<tn>" (row-major grid of tm x tn tiles).
    """
    tokens = LookaheadStreamer(tokenize(descriptor))
    layout = parse_layout_tokens(tokens, elem_bytes)
    _check_end(tokens)
    return layout


def parse_layout_pairs(text: str, elem_bytes: int = 1) -> list[tuple[LayoutSpec, LayoutSpec]]:
    """
    Parses a comma-separated list of "SRC -> DST" layout pairs.
    """
    tokens = LookaheadStreamer(tokenize(text))
    pairs = []
    while True:
        src = parse_layout_tokens(tokens, elem_bytes)
        tokens.expect(Category.ARROW, "Expected '->' between source and destination.")
        dst = parse_layout_tokens(tokens, elem_bytes)
        pairs.append((src, dst))
        if tokens.at_end():
            return pairs
        tokens.expect(Category.COMMA, "Expected ',' between layout pairs.")
