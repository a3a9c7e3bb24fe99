import pytest

import xdmasim.parser.tokenizer
from xdmasim.config.layout import LayoutKind, LayoutSpec
from xdmasim.errors import LayoutError
from xdmasim.parser.parser import (
    LookaheadStreamer,
    UnexpectedEndOfInput,
    UnexpectedToken,
    parse_layout,
    parse_layout_pairs,
    parse_layout_tokens,
)


def tokenize(text):
    return LookaheadStreamer(xdmasim.parser.tokenizer.tokenize(text))


@pytest.fixture
def pair_list():
    return "MN -> MNM8N8, MNM8N16 -> MNM8N32, MNM8N32 -> MN"


def test_streamer_consume_all(pair_list):
    streamer = tokenize(pair_list)
    n = 0
    for tok in streamer:
        n += 1
    assert n == 2 + 1 + 6 + 1 + 6 + 1 + 6 + 1 + 6 + 1 + 2


def test_streamer_lookahead():
    streamer = tokenize("MNM8N8")
    assert streamer.at(2).tok == "M"
    assert streamer.at(3).tok == "8"
    assert next(streamer).tok == "M"
    assert streamer.at(0).tok == "N"


def test_streamer_at_end():
    streamer = tokenize("MN")
    next(streamer)
    next(streamer)
    assert streamer.at_end()
    with pytest.raises(UnexpectedEndOfInput):
        streamer.at(0)


def test_parse_row_major():
    layout = parse_layout("MN")
    assert layout.kind == LayoutKind.ROW_MAJOR
    assert layout.name == "MN"
    assert layout.elem_bytes == 1


def test_parse_tiled():
    layout = parse_layout("MNM8N16", elem_bytes=2)
    assert layout.kind == LayoutKind.TILED
    assert layout.tile_m == 8
    assert layout.tile_n == 16
    assert layout.elem_bytes == 2
    assert layout == LayoutSpec.tiled(8, 16, 2)
    assert layout.name == "MNM8N16"


def test_parse_tokens_stops_after_layout():
    tokens = tokenize("MNM8N8 -> MN")
    assert parse_layout_tokens(tokens) == LayoutSpec.tiled(8, 8)
    assert tokens.at(0).tok == "->"


def test_parse_pairs(pair_list):
    pairs = parse_layout_pairs(pair_list)
    assert len(pairs) == 3
    assert pairs[0] == (LayoutSpec.row_major(), LayoutSpec.tiled(8, 8))
    assert pairs[1] == (LayoutSpec.tiled(8, 16), LayoutSpec.tiled(8, 32))
    assert pairs[2][1].name == "MN"


def test_missing_tile_width():
    with pytest.raises(UnexpectedEndOfInput):
        parse_layout("MNM8N")


def test_trailing_garbage():
    with pytest.raises(UnexpectedToken):
        parse_layout("MN MN")


def test_missing_arrow():
    with pytest.raises(UnexpectedToken, match="Expected '->'"):
        parse_layout_pairs("MN, MNM8N8")


def test_parse_errors_are_layout_errors():
    with pytest.raises(LayoutError):
        parse_layout("NM")
